#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace wda::acceptance {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Context {
    std::filesystem::path workdir;
    bool verbose = false;
};

struct Criterion {
    std::string name;
    double budget_seconds;  // the criterion fails when it runs longer
    std::function<Outcome(const Context&)> run;
};

std::vector<Criterion> fast_criteria();
std::vector<Criterion> benchmark_criteria();

}  // namespace wda::acceptance
