#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <vector>

#include "dab/container.hpp"
#include "dab/error.hpp"
#include "support.hpp"

using namespace dab;
namespace fs = std::filesystem;

namespace {
ContainerHeader header_2x3() {
  ContainerHeader h;
  h.dims = {2, 3};
  h.index_order = "time,x";
  h.variables = {"x"};
  h.levels = {"surface"};
  h.times = {0, 6};
  return h;
}
std::string raw(const ContainerHeader &h, std::size_t payload_bytes) {
  // built by hand so the check does not lean on encode_container
  std::string json = "{\"dims\":[2,3],\"element_type\":\"float32le\",\"index_order\":\"" + h.index_order +
                     "\",\"levels\":[\"surface\"],\"times\":[0,6],\"variables\":[\"x\"]}";
  std::string out = "DAB1";
  std::uint64_t n = json.size();
  out.append(reinterpret_cast<const char *>(&n), 8);
  out += json;
  out.append(payload_bytes, '\0');
  return out;
}
}  // namespace

TEST_CASE("encode and decode") {
  auto h = header_2x3();
  std::vector<float> d = {1.5f, -2.f, 3.25f, 1e-30f, 7.f, -0.f};
  auto bytes = encode_container(h, d);
  CHECK(bytes.substr(0, 4) == "DAB1");
  auto c = decode_container(bytes);
  CHECK(c.header == h);
  CHECK(std::memcmp(c.data.data(), d.data(), d.size() * 4) == 0);

  CHECK_NOTHROW(decode_container(raw(h, 24)));
  CHECK_THROWS_AS(decode_container(raw(h, 20)), FormatError);
  try {
    decode_container(raw(h, 20));
  } catch (const FormatError &e) {
    CHECK(std::string(e.what()).find("20 bytes, expected 24") != std::string::npos);
  }
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_container(bad), FormatError);
  CHECK_THROWS_AS(decode_container(bytes.substr(0, 9)), FormatError);
  CHECK_THROWS_AS(encode_container(h, std::vector<float>(5)), FormatError);
}

TEST_CASE("state series on disk") {
  auto dir = fs::temp_directory_path() / "dab_container_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto g = test::two_var_grid(3, 5);
  std::vector<StateField> series;
  for (int k = 0; k < 4; ++k) {
    Vector v = test::randn(g->size(), std::uint64_t(k)).cast<float>().cast<double>();
    series.emplace_back(g, v, 6 * k);
  }
  auto c = states_to_container(series);
  CHECK(c.header.dims == std::vector<std::uint64_t>{4, 2, 2, 3, 5});
  write_container(dir / "s.dab", c.header, c.data);
  auto back = container_to_states(read_container(dir / "s.dab"), g);
  REQUIRE(back.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(back[std::size_t(k)] == series[std::size_t(k)]);
  CHECK_THROWS_AS(read_container(dir / "missing.dab"), MissingDataError);

  write_text_atomic(dir / "t.txt", "hello");
  CHECK(read_text(dir / "t.txt") == "hello");
  fs::remove_all(dir);
}
