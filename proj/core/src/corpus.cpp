#include "bilm/corpus.hpp"

#include <numeric>
#include <span>
#include <unordered_map>

#include "bilm/common.hpp"
#include "bilm/rng.hpp"

namespace bilm {

CorpusSplit split_corpus(std::int64_t n_lines, std::uint64_t seed) {
    if (n_lines < 10) throw InputError(strfmt("split_corpus: need at least 10 lines, got %lld", static_cast<long long>(n_lines)));
    std::vector<std::int32_t> order(static_cast<size_t>(n_lines));
    std::iota(order.begin(), order.end(), 0);
    rng_shuffle(std::span<std::int32_t>(order), rng_derive(rng_seed(seed), "split"));
    std::int64_t n_train = n_lines * 8 / 10;
    std::int64_t n_dev = n_lines / 10;
    CorpusSplit s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.dev.assign(order.begin() + n_train, order.begin() + n_train + n_dev);
    s.test.assign(order.begin() + n_train + n_dev, order.end());
    return s;
}

std::vector<std::string> load_corpus(const std::string& path) {
    auto lines = read_lines(path);
    while (!lines.empty() && lines.back().empty()) lines.pop_back();  // trailing newline
    for (size_t i = 0; i < lines.size(); ++i) {
        if (split_ws(lines[i]).empty()) {
            throw InputError(strfmt("%s:%zu: empty line in corpus", path.c_str(), i + 1));
        }
    }
    if (lines.empty()) throw InputError("empty corpus file: " + path);
    return lines;
}

ParallelCorpus ParallelCorpus::load(const std::string& l1_path, const std::string& l2_path) {
    ParallelCorpus pc;
    pc.l1 = load_corpus(l1_path);
    pc.l2 = load_corpus(l2_path);
    if (pc.l1.size() != pc.l2.size()) {
        throw InputError(strfmt("parallel corpus line counts differ: %zu vs %zu (%s, %s)",
                                pc.l1.size(), pc.l2.size(), l1_path.c_str(), l2_path.c_str()));
    }
    return pc;
}

std::vector<std::string> gather_lines(const std::vector<std::string>& lines,
                                      const std::vector<std::int32_t>& idx) {
    std::vector<std::string> out;
    out.reserve(idx.size());
    for (std::int32_t i : idx) {
        if (i < 0 || static_cast<size_t>(i) >= lines.size()) throw InputError("gather_lines: index out of range");
        out.push_back(lines[static_cast<size_t>(i)]);
    }
    return out;
}

std::vector<std::vector<std::int32_t>> tokenize_lines(const Tokenizer& tok,
                                                      const std::vector<std::string>& lines) {
    BpeApplier apply(tok.codes);
    std::unordered_map<std::string, std::vector<std::int32_t>> memo;
    std::vector<std::vector<std::int32_t>> out;
    out.reserve(lines.size());
    for (const auto& line : lines) {
        std::vector<std::int32_t> ids;
        for (const auto& w : split_ws(line)) {
            auto it = memo.find(w);
            if (it == memo.end()) {
                it = memo.emplace(w, encode(tok.vocab, apply.segment_word(w))).first;
            }
            ids.insert(ids.end(), it->second.begin(), it->second.end());
        }
        out.push_back(std::move(ids));
    }
    return out;
}

}  // namespace bilm
