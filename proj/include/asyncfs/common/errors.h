#pragma once

#include <cstdint>
#include <stdexcept>
#include <string_view>

namespace asyncfs {

// Error codes carried in responses. Values are part of the wire format.
enum class Errc : uint8_t {
  kOk = 0,
  kExist = 1,
  kNoEnt = 2,
  kStale = 3,
  kPerm = 4,
  kNotEmpty = 5,
  kLoop = 6,
  kAcces = 7,
  kIo = 8,
  kNotDir = 9,
  kInval = 10,
};

std::string_view ErrcName(Errc e);

// Thrown by decoders on truncated or inconsistent input.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace asyncfs
