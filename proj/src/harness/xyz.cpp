#include "shakediff/harness/xyz.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "shakediff/harness/config.hpp"

namespace shakediff::harness {

void write_xyz(std::ostream& out, const Conformation& x, const std::string& comment) {
  if (comment.find('\n') != std::string::npos) throw std::invalid_argument("XYZ comment must be a single line");
  std::string buf = fmt::format("{}\n{}\n", x.size(), comment);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto p = x.position(i);
    const std::string& element = x.labels().empty() ? std::string("C") : x.labels()[i];
    buf += fmt::format("{:<2} {:16.10f} {:16.10f} {:16.10f}\n", element, p.x(), p.y(), p.z());
  }
  out << buf;
}

void write_xyz_file(const std::filesystem::path& path, const Conformation& x, const std::string& comment) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  write_xyz(out, x, comment);
  out.flush();
  if (!out) throw IoError(fmt::format("error while writing '{}'", path.string()));
}

std::vector<XyzFrame> read_xyz(std::istream& in, const std::string& source) {
  std::vector<XyzFrame> frames;
  std::string line;
  std::size_t lineno = 0;
  const auto fail = [&](const std::string& msg) -> XyzError {
    return XyzError(fmt::format("{}:{}: {}", source, lineno, msg));
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream head(line);
    long long count = -1;
    std::string extra;
    if (!(head >> count) || count < 1 || (head >> extra)) throw fail("expected a positive particle count");

    XyzFrame frame{Conformation(Positions::Zero(1, 3)), {}};
    if (!std::getline(in, frame.comment)) throw fail("missing comment line");
    ++lineno;
    if (!frame.comment.empty() && frame.comment.back() == '\r') frame.comment.pop_back();

    Positions p(count, 3);
    std::vector<std::string> labels;
    for (long long i = 0; i < count; ++i) {
      if (!std::getline(in, line)) throw fail(fmt::format("expected {} particle rows, found {}", count, i));
      ++lineno;
      std::istringstream row(line);
      std::string element;
      double x = 0, y = 0, z = 0;
      if (!(row >> element >> x >> y >> z)) throw fail("expected 'element x y z'");
      p.row(i) << x, y, z;
      labels.push_back(element);
    }
    try {
      frame.conformation = Conformation(std::move(p), {}, std::move(labels));
    } catch (const GeometryError& e) {
      throw fail(e.what());
    }
    frames.push_back(std::move(frame));
  }
  if (in.bad()) throw IoError(fmt::format("error while reading '{}'", source));
  if (frames.empty()) throw XyzError(fmt::format("{}: no frames", source));
  return frames;
}

std::vector<XyzFrame> read_xyz_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
  return read_xyz(in, path.string());
}

}  // namespace shakediff::harness
