#pragma once

namespace repsim::cli {

// Exit status: 0 success, 2 argument or config error, 3 data or format error.
int run(int argc, char** argv);

}  // namespace repsim::cli
