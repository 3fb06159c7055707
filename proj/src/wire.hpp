#pragma once

// Minimal protobuf wire-format reader/writer for the ONNX message subset.

#include "saiw/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

namespace saiw::wire {

enum WireType : uint32_t
{
    kVarint = 0,
    kFixed64 = 1,
    kLengthDelimited = 2,
    kStartGroup = 3,
    kEndGroup = 4,
    kFixed32 = 5,
};

class Reader
{
public:
    Reader(std::string_view data, size_t baseOffset = 0)
        : m_Data(data)
        , m_Base(baseOffset)
    {}

    bool done() const { return m_Pos >= m_Data.size(); }
    size_t offset() const { return m_Base + m_Pos; }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, offset()); }

    uint64_t varint()
    {
        uint64_t v = 0;
        for (int shift = 0; shift < 64; shift += 7)
        {
            if (m_Pos >= m_Data.size())
            {
                fail("truncated varint");
            }
            const auto b = static_cast<uint8_t>(m_Data[m_Pos++]);
            v |= static_cast<uint64_t>(b & 0x7f) << shift;
            if (!(b & 0x80))
            {
                return v;
            }
        }
        fail("varint longer than 10 bytes");
    }

    /// Returns false at end of message.
    bool tag(uint32_t& field, WireType& type)
    {
        if (done())
        {
            return false;
        }
        const uint64_t t = varint();
        field = static_cast<uint32_t>(t >> 3);
        type = static_cast<WireType>(t & 7);
        if (field == 0)
        {
            fail("field number 0");
        }
        return true;
    }

    uint32_t fixed32()
    {
        need(4);
        uint32_t v;
        std::memcpy(&v, m_Data.data() + m_Pos, 4);
        m_Pos += 4;
        return v;
    }

    uint64_t fixed64()
    {
        need(8);
        uint64_t v;
        std::memcpy(&v, m_Data.data() + m_Pos, 8);
        m_Pos += 8;
        return v;
    }

    /// Length-delimited payload as a sub-reader positioned at its absolute offset.
    Reader sub()
    {
        const uint64_t len = varint();
        if (len > m_Data.size() - m_Pos)
        {
            fail("length-delimited field of " + std::to_string(len) + " bytes overruns its container");
        }
        Reader r(m_Data.substr(m_Pos, len), offset());
        m_Pos += len;
        return r;
    }

    std::string bytes() { return std::string(sub().m_Data); }

    std::string_view rest() const { return m_Data.substr(m_Pos); }

    void expect(WireType actual, WireType wanted, uint32_t field)
    {
        if (actual != wanted)
        {
            fail("field " + std::to_string(field) + " has wire type " + std::to_string(actual) + ", expected " +
                 std::to_string(wanted));
        }
    }

    void skip(WireType type)
    {
        switch (type)
        {
            case kVarint:
                varint();
                return;
            case kFixed64:
                fixed64();
                return;
            case kLengthDelimited:
                sub();
                return;
            case kFixed32:
                fixed32();
                return;
            default:
                fail("unsupported wire type " + std::to_string(type));
        }
    }

    /// Repeated int64 accepting both packed and unpacked encodings.
    void repeated_int64(WireType type, uint32_t field, std::vector<int64_t>& out)
    {
        if (type == kVarint)
        {
            out.push_back(static_cast<int64_t>(varint()));
            return;
        }
        expect(type, kLengthDelimited, field);
        Reader r = sub();
        while (!r.done())
        {
            out.push_back(static_cast<int64_t>(r.varint()));
        }
    }

    void repeated_float(WireType type, uint32_t field, std::vector<float>& out)
    {
        if (type == kFixed32)
        {
            out.push_back(std::bit_cast<float>(fixed32()));
            return;
        }
        expect(type, kLengthDelimited, field);
        Reader r = sub();
        if (r.m_Data.size() % 4 != 0)
        {
            r.fail("packed float payload is not a multiple of 4 bytes");
        }
        while (!r.done())
        {
            out.push_back(std::bit_cast<float>(r.fixed32()));
        }
    }

private:
    void need(size_t n) const
    {
        if (m_Data.size() - m_Pos < n)
        {
            fail("truncated fixed-width field");
        }
    }

    std::string_view m_Data;
    size_t m_Base;
    size_t m_Pos = 0;
};

class Writer
{
public:
    const std::string& data() const { return m_Out; }

    void varint(uint64_t v)
    {
        while (v >= 0x80)
        {
            m_Out.push_back(static_cast<char>((v & 0x7f) | 0x80));
            v >>= 7;
        }
        m_Out.push_back(static_cast<char>(v));
    }

    void tag(uint32_t field, WireType type) { varint((static_cast<uint64_t>(field) << 3) | type); }

    void int_field(uint32_t field, int64_t v)
    {
        tag(field, kVarint);
        varint(static_cast<uint64_t>(v));
    }

    void float_field(uint32_t field, float v)
    {
        tag(field, kFixed32);
        const auto bits = std::bit_cast<uint32_t>(v);
        m_Out.append(reinterpret_cast<const char*>(&bits), 4);
    }

    void bytes_field(uint32_t field, std::string_view v)
    {
        tag(field, kLengthDelimited);
        varint(v.size());
        m_Out.append(v);
    }

    void message_field(uint32_t field, const Writer& w) { bytes_field(field, w.data()); }

    void packed_int64(uint32_t field, const std::vector<int64_t>& v)
    {
        Writer inner;
        for (int64_t x : v)
        {
            inner.varint(static_cast<uint64_t>(x));
        }
        bytes_field(field, inner.data());
    }

    void packed_float(uint32_t field, const std::vector<float>& v)
    {
        std::string raw(v.size() * 4, '\0');
        for (size_t i = 0; i < v.size(); ++i)
        {
            const auto bits = std::bit_cast<uint32_t>(v[i]);
            std::memcpy(raw.data() + 4 * i, &bits, 4);
        }
        bytes_field(field, raw);
    }

private:
    std::string m_Out;
};

static_assert(std::endian::native == std::endian::little, "wire codec assumes a little-endian host");

} // namespace saiw::wire
