#include "bilm/suite.hpp"

#include <algorithm>
#include <filesystem>

#include <json.hpp>

#include "bilm/common.hpp"

namespace bilm {

using nlohmann::json;

TestSuite load_suite(const std::string& path) {
    auto lines = read_lines(path);
    TestSuite suite;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::string where = strfmt("%s:%zu", path.c_str(), i + 1);
        json j;
        try {
            j = json::parse(lines[i]);
        } catch (const json::exception& e) {
            throw InputError(where + ": bad JSON: " + e.what());
        }
        if (!j.contains("sentence_good") || !j.contains("sentence_bad") || !j.contains("suite_id")) {
            throw InputError(where + ": needs sentence_good, sentence_bad and suite_id");
        }
        MinimalPair p{j["sentence_good"].get<std::string>(), j["sentence_bad"].get<std::string>()};
        if (p.good.empty() || p.bad.empty()) throw InputError(where + ": empty sentence");
        if (p.good == p.bad) throw InputError(where + ": good and bad sentences are identical");

        auto id = j["suite_id"].get<std::string>();
        if (suite.pairs.empty()) {
            suite.suite_id = id;
        } else if (suite.suite_id != id) {
            throw InputError(where + ": suite_id changes mid-file (" + suite.suite_id + " -> " + id + ")");
        }
        if (j.contains("category")) {
            auto cat = j["category"].get<std::string>();
            if (!suite.category.empty() && suite.category != cat) {
                throw InputError(where + ": category changes mid-file");
            }
            suite.category = cat;
        }
        suite.pairs.push_back(std::move(p));
    }
    if (suite.pairs.empty()) throw InputError(path + ": suite has no pairs");
    return suite;
}

void save_suite(const std::string& path, const TestSuite& suite) {
    if (suite.pairs.empty()) throw InputError(path + ": refusing to write a suite with no pairs");
    std::string out;
    for (const auto& p : suite.pairs) {
        json j;
        j["suite_id"] = suite.suite_id;
        if (!suite.category.empty()) j["category"] = suite.category;
        j["sentence_good"] = p.good;
        j["sentence_bad"] = p.bad;
        out += j.dump();
        out += '\n';
    }
    write_file(path, out);
}

std::vector<TestSuite> load_suite_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw InputError(dir + ": not a directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw InputError(dir + ": no .jsonl suites found");
    std::vector<TestSuite> suites;
    for (const auto& f : files) suites.push_back(load_suite(f));
    return suites;
}

std::map<std::string, std::string> load_category_map(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw InputError(path + ": bad JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw InputError(path + ": expected an object of suite_id -> category");
    std::map<std::string, std::string> out;
    for (auto& [k, v] : j.items()) {
        if (!v.is_string()) throw InputError(path + ": category for '" + k + "' is not a string");
        out[k] = v.get<std::string>();
    }
    return out;
}

void apply_categories(std::vector<TestSuite>& suites,
                      const std::map<std::string, std::string>& categories) {
    for (auto& s : suites) {
        auto it = categories.find(s.suite_id);
        if (it == categories.end()) {
            throw InputError("no category mapping for suite '" + s.suite_id + "'");
        }
        s.category = it->second;
    }
}

}  // namespace bilm
