#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "somno/errors.hpp"

// Little-endian primitive readers/writers composed from bytes, so file layout
// does not depend on host endianness. Readers track the stream offset and
// report it on truncation.

namespace somno::io {

inline void write_bytes(std::ostream& os, const unsigned char* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u8(std::ostream& os, std::uint8_t v) {
    write_bytes(os, &v, 1);
}

inline void write_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    write_bytes(os, b, 2);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_bytes(os, b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_bytes(os, b, 8);
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

inline void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

// Reader with offset tracking for error messages.
class Reader {
  public:
    Reader(std::istream& is, std::string origin) : is_(is), origin_(std::move(origin)) {}

    std::uint64_t offset() const { return offset_; }

    void read_exact(unsigned char* p, std::size_t n, const char* what) {
        is_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) {
            throw FormatError(origin_ + ": truncated while reading " + what +
                              " at offset " + std::to_string(offset_));
        }
        offset_ += n;
    }

    std::uint8_t u8(const char* what) {
        unsigned char b;
        read_exact(&b, 1, what);
        return b;
    }

    std::uint16_t u16(const char* what) {
        unsigned char b[2];
        read_exact(b, 2, what);
        return static_cast<std::uint16_t>(b[0] | (std::uint16_t(b[1]) << 8));
    }

    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        read_exact(b, 4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
        return v;
    }

    std::uint64_t u64(const char* what) {
        unsigned char b[8];
        read_exact(b, 8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
        return v;
    }

    float f32(const char* what) {
        std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    double f64(const char* what) {
        std::uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    // True when the stream has no more bytes.
    bool at_end() {
        return is_.peek() == std::char_traits<char>::eof();
    }

    const std::string& origin() const { return origin_; }

  private:
    std::istream& is_;
    std::string origin_;
    std::uint64_t offset_ = 0;
};

}  // namespace somno::io
