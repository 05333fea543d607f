#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sm4::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kDataError = 2;

// Runs one subcommand (generate, train, predict, analyze, evaluate).
// args excludes the program name. Normal output goes to out, usage errors to err.
int dispatch(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err);

int main(int argc, char** argv);

}  // namespace sm4::cli
