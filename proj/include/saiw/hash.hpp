#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace saiw {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// 64-bit FNV-1a; used for in-memory colouring only, never persisted.
class Fnv1a
{
public:
    Fnv1a& add(std::string_view bytes)
    {
        for (unsigned char c : bytes)
        {
            m_State = (m_State ^ c) * 0x100000001b3ULL;
        }
        return *this;
    }

    Fnv1a& add(uint64_t v)
    {
        for (int i = 0; i < 8; ++i)
        {
            m_State = (m_State ^ ((v >> (8 * i)) & 0xff)) * 0x100000001b3ULL;
        }
        return *this;
    }

    uint64_t value() const noexcept { return m_State; }

private:
    uint64_t m_State = 0xcbf29ce484222325ULL;
};

} // namespace saiw
