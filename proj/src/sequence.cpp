#include "proxbo/sequence.hpp"

#include "proxbo/errors.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace proxbo {

namespace {
constexpr std::string_view kProteinSymbols = "ACDEFGHIKLMNPQRSTVWY";
}

Alphabet::Alphabet(std::string_view symbols) : symbols_(symbols) {
    lookup_.fill(-1);
    if (symbols_.size() < 2) throw InputError("alphabet needs at least two symbols");
    if (symbols_.size() > 255) throw InputError("alphabet larger than 255 symbols");
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        auto& slot = lookup_[static_cast<unsigned char>(symbols_[i])];
        if (slot >= 0) throw InputError(std::string("duplicate alphabet symbol '") + symbols_[i] + "'");
        slot = static_cast<std::int16_t>(i);
    }
}

const Alphabet& Alphabet::protein() {
    static const Alphabet a(kProteinSymbols);
    return a;
}

Alphabet Alphabet::synthetic(std::size_t size) {
    if (size < 2 || size > kProteinSymbols.size())
        throw InputError("synthetic alphabet size must be in [2, 20], got " + std::to_string(size));
    return Alphabet(kProteinSymbols.substr(0, size));
}

char Alphabet::symbol(Residue r) const {
    if (r >= symbols_.size()) throw InputError("residue ordinal " + std::to_string(r) + " out of range");
    return symbols_[r];
}

Residue Alphabet::index(char c) const {
    const auto v = lookup_[static_cast<unsigned char>(c)];
    if (v < 0) throw InputError(std::string("symbol '") + c + "' not in alphabet " + symbols_);
    return static_cast<Residue>(v);
}

Sequence Sequence::parse(std::string_view text, const Alphabet& alphabet) {
    std::vector<Residue> r;
    r.reserve(text.size());
    for (char c : text) {
        if (!alphabet.contains(c))
            throw InputError("invalid residue '" + std::string(1, c) + "' in sequence " + std::string(text));
        r.push_back(alphabet.index(c));
    }
    return Sequence(std::move(r));
}

std::string Sequence::to_string(const Alphabet& alphabet) const {
    std::string out;
    out.reserve(residues_.size());
    for (Residue r : residues_) out.push_back(alphabet.symbol(r));
    return out;
}

bool Sequence::valid_for(const Alphabet& alphabet) const noexcept {
    return std::all_of(residues_.begin(), residues_.end(),
                       [&](Residue r) { return r < alphabet.size(); });
}

std::size_t SequenceHash::operator()(const Sequence& s) const noexcept {
    // FNV-1a
    std::uint64_t h = 1469598103934665603ULL;
    for (Residue r : s.residues()) {
        h ^= r;
        h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
}

std::size_t hamming_distance(const Sequence& a, const Sequence& b) {
    if (a.size() != b.size())
        throw InputError("hamming_distance: length mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

Tensor encode_onehot(const Sequence& s, const Alphabet& alphabet) {
    if (!s.valid_for(alphabet)) throw InputError("encode_onehot: sequence not valid for alphabet");
    Tensor t({s.size(), alphabet.size()});
    for (std::size_t i = 0; i < s.size(); ++i) t.at(i, s[i]) = 1.0;
    return t;
}

Sequence decode_onehot(const Tensor& onehot) {
    if (onehot.rank() != 2) throw InputError("decode_onehot: expected an L x V matrix");
    std::vector<Residue> r(onehot.dim(0));
    for (std::size_t i = 0; i < r.size(); ++i) {
        const auto row = onehot.row(i);
        r[i] = static_cast<Residue>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return Sequence(std::move(r));
}

Sequence point_mutate(const Sequence& s, std::size_t position, Residue symbol, const Alphabet& alphabet) {
    if (position >= s.size())
        throw InputError("point_mutate: position " + std::to_string(position) + " >= length " +
                         std::to_string(s.size()));
    if (symbol >= alphabet.size())
        throw InputError("point_mutate: symbol ordinal " + std::to_string(symbol) + " out of range");
    if (s[position] == symbol) throw InputError("point_mutate: substitution does not change the sequence");
    Sequence out = s;
    out.residues_[position] = symbol;
    return out;
}

Sequence random_mutant(const Sequence& s, std::size_t radius, const Alphabet& alphabet, Rng& rng) {
    if (radius < 1 || radius > s.size())
        throw InputError("mutation radius " + std::to_string(radius) + " outside [1, " +
                         std::to_string(s.size()) + "]");
    const std::size_t n_mut = 1 + rng.uniform_index(radius);
    std::vector<std::size_t> positions(s.size());
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    // partial Fisher-Yates: first n_mut slots are a uniform draw without replacement
    for (std::size_t i = 0; i < n_mut; ++i) {
        const std::size_t j = i + rng.uniform_index(positions.size() - i);
        std::swap(positions[i], positions[j]);
    }
    std::vector<Residue> r(s.residues().begin(), s.residues().end());
    for (std::size_t i = 0; i < n_mut; ++i) {
        const std::size_t p = positions[i];
        auto alt = static_cast<Residue>(rng.uniform_index(alphabet.size() - 1));
        if (alt >= r[p]) ++alt;
        r[p] = alt;
    }
    return Sequence(std::move(r));
}

std::vector<Sequence> sample_mutants(const Sequence& s, std::size_t radius, std::size_t count,
                                     const Alphabet& alphabet, Rng& rng) {
    if (radius < 1 || radius > s.size())
        throw InputError("sample_mutants: radius " + std::to_string(radius) + " outside [1, " +
                         std::to_string(s.size()) + "]");
    if (count < 1) throw InputError("sample_mutants: count must be >= 1");
    std::vector<Sequence> out;
    std::unordered_set<Sequence, SequenceHash> seen;
    const std::size_t max_attempts = 64 * count + 256;
    for (std::size_t attempt = 0; attempt < max_attempts && out.size() < count; ++attempt) {
        Sequence m = random_mutant(s, radius, alphabet, rng);
        if (seen.insert(m).second) out.push_back(std::move(m));
    }
    return out;
}

std::vector<Sequence> parse_sequence_lines(std::string_view text, const Alphabet& alphabet) {
    std::vector<Sequence> out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        try {
            out.push_back(Sequence::parse(line, alphabet));
        } catch (const InputError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

}  // namespace proxbo
