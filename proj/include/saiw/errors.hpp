#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace saiw {

/// Base of every error raised by the toolchain.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed serialized input. `offset` is the byte position where decoding failed.
class ParseError : public Error
{
public:
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at byte " + std::to_string(offset) + ")")
        , m_Offset(offset)
    {}

    std::size_t offset() const noexcept { return m_Offset; }

private:
    std::size_t m_Offset;
};

/// An operator, element type or operator feature outside the supported subset.
class UnsupportedOp : public Error
{
public:
    explicit UnsupportedOp(std::string what)
        : Error("unsupported: " + what)
        , m_What(std::move(what))
    {}

    const std::string& subject() const noexcept { return m_What; }

private:
    std::string m_What;
};

class InvariantError : public Error
{
public:
    using Error::Error;
};

class CycleError : public InvariantError
{
public:
    explicit CycleError(std::vector<std::string> tensors)
        : InvariantError(describe(tensors))
        , m_Tensors(std::move(tensors))
    {}

    const std::vector<std::string>& tensors() const noexcept { return m_Tensors; }

private:
    static std::string describe(const std::vector<std::string>& tensors)
    {
        std::string s = "graph contains a cycle through tensors:";
        for (const auto& t : tensors)
        {
            s += " '" + t + "'";
        }
        return s;
    }

    std::vector<std::string> m_Tensors;
};

class ShapeError : public Error
{
public:
    ShapeError(const std::string& node, const std::string& msg)
        : Error("shape error at node '" + node + "': " + msg)
        , m_Node(node)
    {}

    const std::string& node() const noexcept { return m_Node; }

private:
    std::string m_Node;
};

class MissingInput : public Error
{
public:
    explicit MissingInput(const std::string& name)
        : Error("missing graph input '" + name + "'")
    {}
};

class AttestationError : public Error
{
public:
    using Error::Error;
};

/// Invalid partition spec; `pointer` is a JSON pointer to the offending location.
class SpecError : public Error
{
public:
    SpecError(std::string pointer, const std::string& msg)
        : Error("spec error at '" + pointer + "': " + msg)
        , m_Pointer(std::move(pointer))
    {}

    const std::string& pointer() const noexcept { return m_Pointer; }

private:
    std::string m_Pointer;
};

class SpecMismatch : public Error
{
public:
    using Error::Error;
};

class UnknownNode : public Error
{
public:
    explicit UnknownNode(const std::string& node)
        : Error("unknown node '" + node + "'")
    {}
};

class NodeKindError : public Error
{
public:
    using Error::Error;
};

class RangeError : public Error
{
public:
    using Error::Error;
};

class ManifestMismatch : public Error
{
public:
    using Error::Error;
};

class EmptyShape : public Error
{
public:
    using Error::Error;
};

class DegenerateShape : public Error
{
public:
    using Error::Error;
};

class ParamError : public Error
{
public:
    using Error::Error;
};

} // namespace saiw
