#include "proxbo/landscape.hpp"

#include "proxbo/errors.hpp"
#include "proxbo/rng.hpp"
#include "proxbo/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace proxbo {

void FitnessLandscape::check_shape(const Sequence& s) const {
    if (s.size() != length())
        throw InputError("sequence length " + std::to_string(s.size()) + " does not match landscape length " +
                         std::to_string(length()));
    if (!s.valid_for(alphabet())) throw InputError("sequence has residues outside the landscape alphabet");
}

std::vector<double> FitnessLandscape::evaluate_batch(std::span<const Sequence> batch) const {
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& s : batch) out.push_back(evaluate(s));
    return out;
}

// ---------------------------------------------------------------------------
// LookupLandscape

LookupLandscape::LookupLandscape(Alphabet alphabet, std::vector<std::pair<Sequence, double>> entries,
                                 Sequence wild_type)
    : alphabet_(std::move(alphabet)), wild_type_(std::move(wild_type)) {
    if (entries.empty()) throw DataError("lookup landscape has no entries");
    length_ = entries.front().first.size();
    if (length_ == 0) throw DataError("lookup landscape sequences are empty");
    table_.reserve(entries.size());
    for (auto& [seq, score] : entries) {
        if (seq.size() != length_) throw DataError("lookup landscape mixes sequence lengths");
        if (!seq.valid_for(alphabet_)) throw DataError("lookup landscape entry outside alphabet");
        auto [it, inserted] = table_.emplace(seq, score);
        if (!inserted) {
            if (it->second != score)
                throw DataError("conflicting scores for sequence " + seq.to_string(alphabet_));
            continue;
        }
        order_.push_back(seq);
    }
    if (!table_.count(wild_type_))
        throw DataError("wild type " + wild_type_.to_string(alphabet_) + " is not in the lookup table");
}

double LookupLandscape::evaluate(const Sequence& s) const {
    check_shape(s);
    const auto it = table_.find(s);
    if (it == table_.end())
        throw DomainError("sequence " + s.to_string(alphabet_) + " is not in the lookup landscape");
    return it->second;
}

bool LookupLandscape::contains(const Sequence& s) const {
    return s.size() == length_ && table_.count(s) > 0;
}

std::optional<std::vector<Sequence>> LookupLandscape::enumerate(std::size_t limit) const {
    if (order_.size() > limit) return std::nullopt;
    return order_;
}

LookupLandscape parse_lookup(std::string_view text, const LookupOptions& options) {
    std::vector<std::pair<Sequence, double>> entries;
    std::unordered_map<Sequence, std::pair<double, std::size_t>, SequenceHash> first_seen;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        const auto cols = split(line, '\t');
        if (cols.size() != 2)
            throw ParseError("expected 2 tab-separated columns, found " + std::to_string(cols.size()), line_no);
        Sequence seq;
        try {
            seq = Sequence::parse(cols[0], options.alphabet);
        } catch (const InputError& e) {
            throw ParseError(e.what(), line_no);
        }
        const auto score = parse_double(cols[1]);
        if (!score) throw ParseError("non-numeric score '" + std::string(cols[1]) + "'", line_no);
        const double v = options.negate ? -*score : *score;
        if (!entries.empty() && seq.size() != entries.front().first.size())
            throw ParseError("sequence length " + std::to_string(seq.size()) + " differs from first row (" +
                                 std::to_string(entries.front().first.size()) + ")",
                             line_no);
        auto [it, inserted] = first_seen.emplace(seq, std::pair{v, line_no});
        if (!inserted) {
            if (it->second.first != v)
                throw DataError("line " + std::to_string(line_no) + ": sequence " + std::string(cols[0]) +
                                " conflicts with line " + std::to_string(it->second.second));
            continue;
        }
        entries.emplace_back(std::move(seq), v);
    }
    if (entries.empty()) throw DataError("lookup file has no data rows");
    Sequence wt = options.wild_type.empty() ? entries.front().first
                                            : Sequence::parse(options.wild_type, options.alphabet);
    return LookupLandscape(options.alphabet, std::move(entries), std::move(wt));
}

LookupLandscape load_lookup(const std::filesystem::path& path, const LookupOptions& options) {
    if (!std::filesystem::exists(path)) throw Error("landscape file not found: " + path.string());
    try {
        return parse_lookup(read_file(path), options);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

// ---------------------------------------------------------------------------
// NKLandscape

namespace {

std::size_t ipow(std::size_t base, std::size_t exp) {
    std::size_t r = 1;
    while (exp--) r *= base;
    return r;
}

}  // namespace

NKLandscape NKLandscape::generate(std::size_t n, std::size_t k, Alphabet alphabet, std::uint64_t seed) {
    if (n < 1) throw InputError("NK: N must be >= 1");
    if (k > n - 1) throw InputError("NK: K must satisfy 0 <= K <= N-1");
    const std::size_t v = alphabet.size();
    if (static_cast<double>(k + 1) * std::log2(static_cast<double>(v)) > 26.0)
        throw SizeError("NK: per-site table V^(K+1) too large");
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> neighbors(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> others;
        others.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) others.push_back(j);
        for (std::size_t a = 0; a < k; ++a) {
            const std::size_t b = a + rng.uniform_index(others.size() - a);
            std::swap(others[a], others[b]);
        }
        neighbors[i].assign(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(neighbors[i].begin(), neighbors[i].end());
    }
    const std::size_t table_size = ipow(v, k + 1);
    std::vector<std::vector<double>> tables(n, std::vector<double>(table_size));
    for (auto& t : tables)
        for (auto& x : t) x = rng.uniform01();
    return NKLandscape(std::move(alphabet), k, std::move(neighbors), std::move(tables), seed);
}

NKLandscape::NKLandscape(Alphabet alphabet, std::size_t k, std::vector<std::vector<std::size_t>> neighbors,
                         std::vector<std::vector<double>> tables, std::uint64_t seed)
    : alphabet_(std::move(alphabet)), k_(k), neighbors_(std::move(neighbors)), tables_(std::move(tables)),
      seed_(seed) {
    const std::size_t n = neighbors_.size();
    if (n < 1) throw InputError("NK: N must be >= 1");
    if (k_ > n - 1) throw InputError("NK: K must satisfy 0 <= K <= N-1");
    if (tables_.size() != n) throw InputError("NK: need one table per site");
    const std::size_t table_size = ipow(alphabet_.size(), k_ + 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (neighbors_[i].size() != k_) throw InputError("NK: site " + std::to_string(i) + " needs K neighbours");
        for (auto j : neighbors_[i])
            if (j >= n || j == i) throw InputError("NK: bad neighbour index at site " + std::to_string(i));
        if (tables_[i].size() != table_size)
            throw InputError("NK: table " + std::to_string(i) + " must have V^(K+1) entries");
    }
}

double NKLandscape::evaluate(const Sequence& s) const {
    check_shape(s);
    const std::size_t v = alphabet_.size();
    double total = 0.0;
    for (std::size_t i = 0; i < neighbors_.size(); ++i) {
        std::size_t key = s[i];
        for (auto j : neighbors_[i]) key = key * v + s[j];
        total += tables_[i][key];
    }
    return total / static_cast<double>(neighbors_.size());
}

bool NKLandscape::contains(const Sequence& s) const {
    return s.size() == length() && s.valid_for(alphabet_);
}

std::optional<std::uint64_t> NKLandscape::state_count() const {
    std::uint64_t c = 1;
    for (std::size_t i = 0; i < n(); ++i) {
        if (c > (std::uint64_t(1) << 63) / alphabet_.size()) return std::nullopt;
        c *= alphabet_.size();
    }
    return c;
}

std::optional<std::vector<Sequence>> NKLandscape::enumerate(std::size_t limit) const {
    const auto c = state_count();
    if (!c || *c > limit) return std::nullopt;
    return enumerate_all(n(), alphabet_.size());
}

Sequence NKLandscape::default_wild_type() const {
    return Sequence(std::vector<Residue>(n(), 0));
}

std::string NKLandscape::to_spec() const {
    std::ostringstream os;
    os << "# NK landscape\n";
    os << "n=" << n() << "\n";
    os << "k=" << k_ << "\n";
    os << "alphabet=" << alphabet_.symbols() << "\n";
    os << "seed=" << seed_ << "\n";
    for (std::size_t i = 0; i < n(); ++i) {
        os << "neighbors." << i << "=";
        for (std::size_t j = 0; j < neighbors_[i].size(); ++j) os << (j ? "," : "") << neighbors_[i][j];
        os << "\n";
    }
    for (std::size_t i = 0; i < n(); ++i) {
        os << "table." << i << "=";
        for (std::size_t j = 0; j < tables_[i].size(); ++j) os << (j ? "," : "") << format_double(tables_[i][j]);
        os << "\n";
    }
    return os.str();
}

NKLandscape NKLandscape::from_spec(std::string_view text) {
    std::map<std::string, std::string, std::less<>> kv;
    std::size_t line_no = 0;
    for (auto line : split(text, '\n')) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key=value", line_no);
        kv.emplace(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    auto need = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw ParseError("NK spec missing key '" + key + "'", 0);
        return it->second;
    };
    const auto n = parse_u64(need("n"));
    const auto k = parse_u64(need("k"));
    const auto seed = parse_u64(need("seed"));
    if (!n || !k || !seed) throw ParseError("NK spec: n, k and seed must be non-negative integers", 0);
    Alphabet alphabet(need("alphabet"));
    std::vector<std::vector<std::size_t>> neighbors(*n);
    std::vector<std::vector<double>> tables(*n);
    for (std::size_t i = 0; i < *n; ++i) {
        const auto& nb = need("neighbors." + std::to_string(i));
        if (!nb.empty())
            for (auto tok : split(nb, ',')) {
                const auto j = parse_u64(tok);
                if (!j) throw ParseError("NK spec: bad neighbour index '" + std::string(tok) + "'", 0);
                neighbors[i].push_back(*j);
            }
        for (auto tok : split(need("table." + std::to_string(i)), ',')) {
            const auto x = parse_double(tok);
            if (!x) throw ParseError("NK spec: bad table value '" + std::string(tok) + "'", 0);
            tables[i].push_back(*x);
        }
    }
    return NKLandscape(std::move(alphabet), *k, std::move(neighbors), std::move(tables), *seed);
}

double nk_fitness(const NKLandscape& landscape, const Sequence& s) { return landscape.evaluate(s); }

std::vector<Sequence> enumerate_all(std::size_t length, std::size_t alphabet_size) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < length; ++i) total *= alphabet_size;
    std::vector<Sequence> out;
    out.reserve(total);
    std::vector<Residue> cur(length, 0);
    for (std::size_t c = 0; c < total; ++c) {
        out.emplace_back(cur);
        for (std::size_t p = length; p-- > 0;) {
            if (++cur[p] < alphabet_size) break;
            cur[p] = 0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// BudgetedOracle

BudgetedOracle::BudgetedOracle(const FitnessLandscape& inner, std::size_t rounds, std::size_t batch_size)
    : inner_(inner), rounds_total_(rounds), batch_size_(batch_size) {
    if (rounds < 1) throw InputError("oracle needs at least one round");
    if (batch_size < 1) throw InputError("oracle batch size must be >= 1");
}

std::vector<double> BudgetedOracle::query_batch(std::span<const Sequence> batch) {
    if (rounds_remaining() == 0)
        throw BudgetError("query budget exhausted after " + std::to_string(rounds_total_) + " rounds");
    if (batch.empty()) throw InputError("query_batch: empty batch");
    if (batch.size() > batch_size_)
        throw InputError("query_batch: batch of " + std::to_string(batch.size()) + " exceeds batch size " +
                         std::to_string(batch_size_));
    // Evaluate everything first so a domain error leaves the budget untouched.
    std::vector<double> scores = inner_.evaluate_batch(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) log_.push_back({rounds_used_, batch[i], scores[i]});
    ++rounds_used_;
    return scores;
}

double BudgetedOracle::measure_reference(const Sequence& s) {
    if (reference_taken_) throw BudgetError("reference measurement already taken");
    const double y = inner_.evaluate(s);
    reference_taken_ = true;
    log_.push_back({rounds_used_, s, y});
    return y;
}

}  // namespace proxbo
