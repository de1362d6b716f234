#pragma once

#include "proxbo/rng.hpp"
#include "proxbo/tensor.hpp"

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace proxbo {

using Residue = std::uint8_t;

/// Ordered set of residue symbols. Residues are stored as ordinals into this
/// ordering; characters only appear at I/O boundaries.
class Alphabet {
public:
    /// Throws InputError for fewer than two symbols, duplicates, or more than 255.
    explicit Alphabet(std::string_view symbols);

    /// The 20 canonical amino acids in one-letter alphabetical order:
    /// ACDEFGHIKLMNPQRSTVWY.
    static const Alphabet& protein();

    /// First `size` symbols of the protein ordering (2 <= size <= 20); used for
    /// synthetic landscapes so their text form stays valid protein text.
    static Alphabet synthetic(std::size_t size);

    std::size_t size() const noexcept { return symbols_.size(); }
    char symbol(Residue r) const;
    /// Throws InputError for a character outside the alphabet.
    Residue index(char c) const;
    bool contains(char c) const noexcept { return lookup_[static_cast<unsigned char>(c)] >= 0; }
    const std::string& symbols() const noexcept { return symbols_; }

    friend bool operator==(const Alphabet& a, const Alphabet& b) { return a.symbols_ == b.symbols_; }

private:
    std::string symbols_;
    std::array<std::int16_t, 256> lookup_{};
};

/// Fixed-length residue string. Equality and ordering compare ordinals.
class Sequence {
public:
    Sequence() = default;
    explicit Sequence(std::vector<Residue> residues) : residues_(std::move(residues)) {}

    /// Parses text form. Throws InputError naming the bad character.
    static Sequence parse(std::string_view text, const Alphabet& alphabet);
    std::string to_string(const Alphabet& alphabet) const;

    std::size_t size() const noexcept { return residues_.size(); }
    Residue operator[](std::size_t i) const { return residues_[i]; }
    std::span<const Residue> residues() const noexcept { return residues_; }

    /// True when every ordinal is valid for `alphabet`.
    bool valid_for(const Alphabet& alphabet) const noexcept;

    friend bool operator==(const Sequence&, const Sequence&) = default;
    friend auto operator<=>(const Sequence&, const Sequence&) = default;

private:
    friend Sequence point_mutate(const Sequence&, std::size_t, Residue, const Alphabet&);
    std::vector<Residue> residues_;
};

struct SequenceHash {
    std::size_t operator()(const Sequence& s) const noexcept;
};

/// Number of differing positions. Throws InputError on length mismatch.
std::size_t hamming_distance(const Sequence& a, const Sequence& b);

/// L x V matrix, row i one-hot at column s[i].
Tensor encode_onehot(const Sequence& s, const Alphabet& alphabet);

/// Row-wise argmax of an L x V matrix.
Sequence decode_onehot(const Tensor& onehot);

/// Copy of `s` with `symbol` at `position`. Rejects out-of-range arguments and
/// no-op substitutions with InputError.
Sequence point_mutate(const Sequence& s, std::size_t position, Residue symbol, const Alphabet& alphabet);

/// Random mutant at Hamming distance in [1, radius]: the mutation count is
/// uniform on [1, radius], positions are drawn without replacement, and each
/// replacement symbol is uniform over the V-1 alternatives.
Sequence random_mutant(const Sequence& s, std::size_t radius, const Alphabet& alphabet, Rng& rng);

/// `count` distinct mutants of `s`, each within distance [1, radius]. Duplicates
/// are redrawn up to a bounded number of attempts, so the result may be shorter
/// than `count` only when the neighbourhood is too small to fill it.
std::vector<Sequence> sample_mutants(const Sequence& s, std::size_t radius, std::size_t count,
                                     const Alphabet& alphabet, Rng& rng);

/// Reads one sequence per line; blank lines are skipped.
std::vector<Sequence> parse_sequence_lines(std::string_view text, const Alphabet& alphabet);

}  // namespace proxbo
