#include "bilm/vocab.hpp"

#include <algorithm>
#include <map>

#include "bilm/common.hpp"

namespace bilm {

const std::vector<std::string>& Vocab::special_strings() {
    static const std::vector<std::string> specials = {"<mask>", "<pad>", "<unk>", "<bos>", "<eos>"};
    return specials;
}

Vocab Vocab::with_specials() {
    Vocab v;
    for (const auto& s : special_strings()) v.push(s, 0);
    return v;
}

std::int32_t Vocab::id_or_unk(const std::string& s) const {
    auto it = index.find(s);
    return it == index.end() ? kUnk : it->second;
}

const std::string& Vocab::subword(std::int32_t id) const {
    if (id < 0 || id >= size()) throw InputError(strfmt("vocab id %d out of range [0,%d)", id, size()));
    return entries[static_cast<size_t>(id)].first;
}

void Vocab::push(std::string subword, std::int64_t count) {
    auto [it, fresh] = index.emplace(subword, size());
    if (!fresh) throw InputError("duplicate vocab subword '" + subword + "'");
    entries.emplace_back(std::move(subword), count);
}

std::uint64_t Vocab::content_hash() const {
    std::string blob;
    for (const auto& [s, c] : entries) {
        blob += s;
        blob += '\x1f';
        blob += std::to_string(c);
        blob += '\n';
    }
    return fnv1a64(blob);
}

void Vocab::save(const std::string& path) const {
    std::string body;
    for (const auto& [s, c] : entries) {
        body += s;
        body += ' ';
        body += std::to_string(c);
        body += '\n';
    }
    write_file(path, body);
}

Vocab Vocab::load(const std::string& path) {
    Vocab v;
    for (const auto& line : read_lines(path)) {
        if (line.empty()) continue;
        auto fields = split_ws(line);
        if (fields.size() != 2) throw InputError("vocab file: malformed line '" + line + "'");
        std::int64_t count = 0;
        try {
            count = std::stoll(fields[1]);
        } catch (const std::exception&) {
            throw InputError("vocab file: bad count in line '" + line + "'");
        }
        v.push(fields[0], count);
    }
    const auto& specials = special_strings();
    if (v.size() < kNumSpecials) throw InputError("vocab file: missing specials header");
    for (std::int32_t i = 0; i < kNumSpecials; ++i) {
        if (v.entries[static_cast<size_t>(i)].first != specials[static_cast<size_t>(i)]) {
            throw InputError("vocab file: specials header mismatch at id " + std::to_string(i));
        }
    }
    return v;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& segmented_corpus, std::int64_t cap) {
    if (cap < Vocab::kNumSpecials) throw InputError("vocab cap must be >= 5");
    std::map<std::string, std::int64_t> counts;
    for (const auto& line : segmented_corpus) {
        for (const auto& s : line) counts[s] += 1;
    }
    std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v = Vocab::with_specials();
    std::int64_t budget = cap - Vocab::kNumSpecials;
    for (const auto& [s, c] : ranked) {
        if (budget == 0) break;
        v.push(s, c);
        budget -= 1;
    }
    return v;
}

std::vector<std::int32_t> encode(const Vocab& v, const std::vector<std::string>& subwords) {
    std::vector<std::int32_t> ids;
    ids.reserve(subwords.size());
    for (const auto& s : subwords) ids.push_back(v.id_or_unk(s));
    return ids;
}

std::vector<std::string> decode(const Vocab& v, const std::vector<std::int32_t>& ids) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (std::int32_t id : ids) out.push_back(v.subword(id));
    return out;
}

}  // namespace bilm
