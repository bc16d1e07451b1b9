#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

namespace sgm {

/// Base for every error raised by the library.
struct Error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or channel counts that do not fit together.
struct ShapeError : Error
{
  using Error::Error;
};

/// A scalar or configuration argument outside its valid range.
struct ArgumentError : Error
{
  using Error::Error;
};

/// A file could not be opened, read or written.
struct IoError : Error
{
  IoError(std::filesystem::path const &p, std::string const &what)
    : Error(p.string() + ": " + what)
    , path(p)
  {
  }
  std::filesystem::path path;
};

/// File contents do not match the declared format.
struct FormatError : Error
{
  FormatError(std::filesystem::path const &p, std::string const &what)
    : Error(p.string() + ": " + what)
    , path(p)
  {
  }
  std::filesystem::path path;
};

/// NaN/Inf encountered during an iterative procedure.
struct NumericalError : Error
{
  using Error::Error;
};

} // namespace sgm
