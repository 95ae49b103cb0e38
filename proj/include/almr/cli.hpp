#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace almr::cli {

// Runs one command. `args` excludes the program name. Returns the process
// exit status: 0 on success, 2 parse/usage/I/O, 3 fit, 4 frontier,
// 5 intersect, 6 lab.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

int run(int argc, char** argv);

}  // namespace almr::cli
