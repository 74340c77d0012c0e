#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

#include "empathy/cli.hpp"

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("empathy"));
    if (const char* level = std::getenv("EMPATHY_LOG")) spdlog::set_level(spdlog::level::from_str(level));
    std::vector<std::string> args(argv + 1, argv + argc);
    return empathy::cli::dispatch(args, std::cout, std::cerr);
}
