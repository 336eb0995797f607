#include "dab/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dab/error.hpp"

namespace dab {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'D', 'A', 'B', '1'};

nlohmann::json header_json(const ContainerHeader &h) {
  return nlohmann::json{{"dims", h.dims},           {"index_order", h.index_order},
                        {"variables", h.variables}, {"levels", h.levels},
                        {"times", h.times},         {"element_type", h.element_type}};
}

void validate(const ContainerHeader &h) {
  if (h.element_type != "float32le") throw FormatError("unsupported element type " + h.element_type);
  for (std::size_t i = 1; i < h.times.size(); ++i)
    if (h.times[i] <= h.times[i - 1]) throw FormatError("container time stamps not strictly increasing");
}

}  // namespace

std::uint64_t ContainerHeader::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

std::string encode_container(const ContainerHeader &header, std::span<const float> data) {
  validate(header);
  if (header.element_count() != data.size())
    throw FormatError("header dims describe " + std::to_string(header.element_count()) +
                      " elements but " + std::to_string(data.size()) + " were given");
  const std::string h = header_json(header).dump();
  std::string out;
  out.reserve(12 + h.size() + data.size_bytes());
  out.append(kMagic, 4);
  const std::uint64_t len = h.size();
  out.append(reinterpret_cast<const char *>(&len), 8);
  out.append(h);
  out.append(reinterpret_cast<const char *>(data.data()), data.size_bytes());
  return out;
}

Container decode_container(const std::string &bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("bad container magic (expected \"DAB1\")");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 4, 8);
  if (len > bytes.size() - 12) throw FormatError("container header truncated");
  Container c;
  try {
    const auto j = nlohmann::json::parse(bytes.substr(12, len));
    j.at("dims").get_to(c.header.dims);
    j.at("index_order").get_to(c.header.index_order);
    j.at("variables").get_to(c.header.variables);
    j.at("levels").get_to(c.header.levels);
    j.at("times").get_to(c.header.times);
    j.at("element_type").get_to(c.header.element_type);
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("malformed container header: ") + e.what());
  }
  validate(c.header);
  const std::uint64_t expected = c.header.element_count() * 4;
  const std::uint64_t actual = bytes.size() - 12 - len;
  if (expected != actual)
    throw FormatError("container payload is " + std::to_string(actual) + " bytes, expected " +
                      std::to_string(expected));
  c.data.resize(c.header.element_count());
  std::memcpy(c.data.data(), bytes.data() + 12 + len, expected);
  return c;
}

void write_text_atomic(const std::filesystem::path &path, const std::string &text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw MissingDataError("cannot write " + tmp.string());
    f.write(text.data(), std::streamsize(text.size()));
    if (!f) throw MissingDataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingDataError("missing file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_container(const std::filesystem::path &path, const ContainerHeader &header,
                     std::span<const float> data) {
  write_text_atomic(path, encode_container(header, data));
}

Container read_container(const std::filesystem::path &path) { return decode_container(read_text(path)); }

Container states_to_container(std::span<const StateField> series) {
  if (series.empty()) throw DimensionError("cannot store an empty series");
  const GridSpec &g = series.front().grid();
  Container c;
  c.header.dims = {series.size(), g.n_var(), g.n_level(), g.n_lat(), g.n_lon()};
  c.header.index_order = "time,variable,level,lat,lon";
  for (const auto &v : g.variables()) c.header.variables.push_back(v.name);
  c.header.levels = g.levels();
  c.data.reserve(series.size() * g.size());
  for (const auto &s : series) {
    if (!(s.grid() == g)) throw DimensionError("series mixes grids");
    c.header.times.push_back(s.time());
    for (double x : s.values()) c.data.push_back(float(x));
  }
  return c;
}

std::vector<StateField> container_to_states(const Container &c, const GridPtr &grid) {
  const auto &d = c.header.dims;
  if (d.size() != 5 || d[1] != grid->n_var() || d[2] != grid->n_level() || d[3] != grid->n_lat() ||
      d[4] != grid->n_lon() || c.header.times.size() != d[0])
    throw FormatError("container shape does not match the grid");
  std::vector<StateField> out;
  out.reserve(d[0]);
  const std::size_t m = grid->size();
  for (std::size_t t = 0; t < d[0]; ++t) {
    Vector v(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) v[Eigen::Index(i)] = double(c.data[t * m + i]);
    out.emplace_back(grid, std::move(v), c.header.times[t]);
  }
  return out;
}

}  // namespace dab
