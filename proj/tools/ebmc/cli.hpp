#pragma once

#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace ebmc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one subcommand. `args` excludes the program name. When `read_flags`
/// is given it receives every flag the handler consulted.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        std::set<std::string>* read_flags = nullptr);

/// Help for one subcommand, or for all of them when empty.
std::string help_text(const std::string& subcommand = "");
/// Flags registered with the parser, sorted; positionals by name.
std::vector<std::string> declared_flags(const std::string& subcommand);
std::vector<std::string> subcommands();

}  // namespace ebmc::cli
