#include "acceptance/checks.hpp"

#include <spdlog/spdlog.h>

#include <cstdio>
#include <exception>

int main()
{
    spdlog::set_level(spdlog::level::off);
    int failed = 0;
    for (const auto& check : covaug::acceptance::primary_checks()) {
        covaug::acceptance::CheckResult r;
        try {
            r = check.run();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", check.name.c_str(), r.detail.c_str());
        std::fflush(stdout);
        failed += !r.pass;
    }
    std::printf("%d/%zu primary criteria passed\n", static_cast<int>(covaug::acceptance::primary_checks().size()) - failed,
                covaug::acceptance::primary_checks().size());
    return failed == 0 ? 0 : 1;
}
