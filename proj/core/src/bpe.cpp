#include "bilm/bpe.hpp"

#include <algorithm>
#include <sstream>

#include "bilm/common.hpp"

namespace bilm {

namespace {

using Pair = std::pair<std::string, std::string>;

// Merges every left-to-right non-overlapping occurrence of (l, r).
void merge_pair(std::vector<std::string>& syms, const std::string& l, const std::string& r) {
    size_t w = 0;
    for (size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == l && syms[i + 1] == r) {
            syms[w++] = l + r;
            i += 2;
        } else {
            if (w != i) syms[w] = std::move(syms[i]);
            ++w;
            ++i;
        }
    }
    syms.resize(w);
}

std::vector<std::string> word_symbols(const std::string& word) {
    if (word.find(kEowMarker) != std::string::npos) {
        throw InputError("word contains the end-of-word marker: '" + word + "'");
    }
    auto syms = utf8_chars(word);
    syms.emplace_back(kEowMarker);
    return syms;
}

// A bare trailing marker belongs to the final subword.
void fuse_marker(std::vector<std::string>& syms) {
    if (syms.size() >= 2 && syms.back() == kEowMarker) {
        syms.pop_back();
        syms.back() += kEowMarker;
    }
}

}  // namespace

std::vector<std::string> utf8_chars(const std::string& word) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < word.size()) {
        unsigned char c = static_cast<unsigned char>(word[i]);
        size_t len = 1;
        if ((c & 0x80u) == 0x00u) len = 1;
        else if ((c & 0xE0u) == 0xC0u) len = 2;
        else if ((c & 0xF0u) == 0xE0u) len = 3;
        else if ((c & 0xF8u) == 0xF0u) len = 4;
        len = std::min(len, word.size() - i);
        out.push_back(word.substr(i, len));
        i += len;
    }
    return out;
}

BpeCodes train_bpe(const std::vector<std::string>& corpus_lines, std::int64_t num_merges) {
    if (num_merges < 0) throw InputError("num_merges must be >= 0");

    // Collect word types with frequencies, first-seen order irrelevant: the
    // pair-count map below is ordered, which fixes tie-breaking.
    std::map<std::string, std::int64_t> word_counts;
    for (const auto& line : corpus_lines) {
        for (const auto& w : split_ws(line)) word_counts[w] += 1;
    }
    if (word_counts.empty()) throw InputError("train_bpe: empty corpus");

    std::vector<std::pair<std::vector<std::string>, std::int64_t>> types;
    types.reserve(word_counts.size());
    for (const auto& [w, c] : word_counts) types.emplace_back(word_symbols(w), c);

    BpeCodes codes;
    for (std::int64_t step = 0; step < num_merges; ++step) {
        std::map<Pair, std::int64_t> counts;
        for (const auto& [syms, c] : types) {
            for (size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += c;
        }
        const Pair* best = nullptr;
        std::int64_t best_count = 0;
        for (const auto& [p, c] : counts) {
            if (c > best_count) {  // map order makes the first max the lexicographic min
                best = &p;
                best_count = c;
            }
        }
        if (!best || best_count < 2) break;  // nothing left worth merging
        codes.merges.push_back(*best);
        for (auto& [syms, c] : types) merge_pair(syms, best->first, best->second);
    }
    return codes;
}

BpeApplier::BpeApplier(const BpeCodes& codes) {
    for (size_t r = 0; r < codes.merges.size(); ++r) {
        auto [it, fresh] = rank_.emplace(codes.merges[r], static_cast<std::int64_t>(r));
        if (!fresh) throw InputError("duplicate merge rule '" + codes.merges[r].first + " " + codes.merges[r].second + "'");
    }
}

std::vector<std::string> BpeApplier::segment_word(const std::string& word) const {
    auto syms = word_symbols(word);
    while (syms.size() >= 2) {
        std::int64_t best_rank = -1;
        const Pair* best = nullptr;
        for (size_t i = 0; i + 1 < syms.size(); ++i) {
            auto it = rank_.find({syms[i], syms[i + 1]});
            if (it != rank_.end() && (best_rank < 0 || it->second < best_rank)) {
                best_rank = it->second;
                best = &it->first;
            }
        }
        if (!best) break;
        merge_pair(syms, best->first, best->second);
    }
    fuse_marker(syms);
    return syms;
}

std::vector<std::string> BpeApplier::segment_line(const std::string& line) const {
    std::vector<std::string> out;
    for (const auto& w : split_ws(line)) {
        auto syms = segment_word(w);
        out.insert(out.end(), syms.begin(), syms.end());
    }
    return out;
}

std::vector<std::string> apply_bpe(const BpeCodes& codes, const std::string& line) {
    return BpeApplier(codes).segment_line(line);
}

std::string detokenize(const std::vector<std::string>& subwords) {
    const std::string marker = kEowMarker;
    std::string out;
    std::string word;
    for (const auto& s : subwords) {
        if (s.size() >= marker.size() && s.compare(s.size() - marker.size(), marker.size(), marker) == 0) {
            word += s.substr(0, s.size() - marker.size());
            if (!out.empty()) out += ' ';
            out += word;
            word.clear();
        } else {
            word += s;
        }
    }
    if (!word.empty()) throw InputError("detokenize: trailing subwords without an end-of-word marker");
    return out;
}

void BpeCodes::save(const std::string& path) const {
    std::string body;
    for (const auto& [l, r] : merges) {
        body += l;
        body += ' ';
        body += r;
        body += '\n';
    }
    write_file(path, body);
}

BpeCodes BpeCodes::load(const std::string& path) {
    BpeCodes codes;
    std::map<Pair, bool> seen;
    for (const auto& line : read_lines(path)) {
        if (line.empty()) continue;
        auto fields = split_ws(line);
        if (fields.size() != 2) throw InputError("codes file: malformed line '" + line + "'");
        Pair p{fields[0], fields[1]};
        if (seen.count(p)) throw InputError("codes file: duplicate merge '" + line + "'");
        seen[p] = true;
        codes.merges.push_back(std::move(p));
    }
    return codes;
}

}  // namespace bilm
