#pragma once

#include <map>
#include <string>
#include <vector>

namespace bilm {

struct MinimalPair {
    std::string good;
    std::string bad;
};

// One test suite of minimal pairs plus its coarse linguistic category.
struct TestSuite {
    std::string suite_id;
    std::string category;  // empty until a category map is applied
    std::vector<MinimalPair> pairs;
};

inline const std::vector<std::string>& known_categories() {
    static const std::vector<std::string> kCats{"morphology", "syntax", "semantics",
                                                "syntax&semantics"};
    return kCats;
}

// JSON-lines file: one object per pair with fields sentence_good,
// sentence_bad, suite_id and optional category. All lines must agree on
// suite_id (and category, when present).
TestSuite load_suite(const std::string& path);

// Writes the same JSON-lines layout load_suite reads. The category field is
// emitted only when set.
void save_suite(const std::string& path, const TestSuite& suite);

// All *.jsonl files of a directory, sorted by file name.
std::vector<TestSuite> load_suite_dir(const std::string& dir);

// Benchmark metadata: a JSON object mapping suite_id -> category.
std::map<std::string, std::string> load_category_map(const std::string& path);

// Fills in suite categories; unmapped suites are an input error.
void apply_categories(std::vector<TestSuite>& suites,
                      const std::map<std::string, std::string>& categories);

}  // namespace bilm
