#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "shakediff/geometry.hpp"

namespace shakediff::harness {

/// Malformed XYZ content; the message names the line.
class XyzError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct XyzFrame {
  Conformation conformation;
  std::string comment;
};

/// Count line, comment line, then "element x y z" rows in Angstrom; element "C" when unlabeled.
void write_xyz(std::ostream& out, const Conformation& x, const std::string& comment);
void write_xyz_file(const std::filesystem::path& path, const Conformation& x, const std::string& comment);

/// Reads every frame in the stream. Extra columns after x y z are ignored.
std::vector<XyzFrame> read_xyz(std::istream& in, const std::string& source = "<xyz>");
std::vector<XyzFrame> read_xyz_file(const std::filesystem::path& path);

}  // namespace shakediff::harness
