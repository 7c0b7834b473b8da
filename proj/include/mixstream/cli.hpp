#ifndef MIXSTREAM_CLI_HPP
#define MIXSTREAM_CLI_HPP

#include <cstdint>
#include <string>

namespace mixstream {

// "250ms", "30m", "1h", "8h", "2d", or a bare integer of milliseconds.
std::int64_t parse_duration_ms(const std::string& text);

// Entry point behind the binary. Exit codes: 0 success, 1 usage,
// 2 data error, 3 numerical failure.
int run_cli(int argc, const char* const* argv);

}  // namespace mixstream

#endif  // MIXSTREAM_CLI_HPP
