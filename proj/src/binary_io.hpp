#pragma once

// Little-endian primitive encoding shared by the store and model file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "sleepnet/error.hpp"

namespace sleepnet::detail {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.write(bytes, sizeof(T));
}

/// Reads one value; a short read throws `truncated` with the given context.
template <typename T>
T get(std::istream& in, ErrorCode truncated, const char* what) {
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    if (!in.read(bytes, sizeof(T))) {
        throw Error(truncated, std::string("unexpected end of file reading ") + what);
    }
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

inline void get_bytes(std::istream& in, char* dst, std::size_t n, ErrorCode truncated,
                      const char* what) {
    if (!in.read(dst, static_cast<std::streamsize>(n))) {
        throw Error(truncated, std::string("unexpected end of file reading ") + what);
    }
}

}  // namespace sleepnet::detail
