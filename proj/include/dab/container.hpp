#ifndef DAB_CONTAINER_HPP
#define DAB_CONTAINER_HPP

// "DAB1" array container:
//   bytes 0..3   magic "DAB1"
//   bytes 4..11  header length H, uint64 little-endian
//   next H bytes header, compact JSON (UTF-8)
//   remainder    payload, float32 little-endian, row-major over `dims`

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dab/grid.hpp"

namespace dab {

struct ContainerHeader {
  std::vector<std::uint64_t> dims;
  std::string index_order;
  std::vector<std::string> variables;
  std::vector<std::string> levels;
  std::vector<Hours> times;
  std::string element_type = "float32le";

  std::uint64_t element_count() const;
  bool operator==(const ContainerHeader &) const = default;
};

struct Container {
  ContainerHeader header;
  std::vector<float> data;
};

/// Writes through a temporary file and renames it into place.
void write_container(const std::filesystem::path &path, const ContainerHeader &header,
                     std::span<const float> data);
Container read_container(const std::filesystem::path &path);

/// Encode/decode the container byte stream without touching the filesystem.
std::string encode_container(const ContainerHeader &header, std::span<const float> data);
Container decode_container(const std::string &bytes);

/// [time][variable][level][lat][lon] container of a state series.
Container states_to_container(std::span<const StateField> series);
std::vector<StateField> container_to_states(const Container &c, const GridPtr &grid);

/// Atomic text write (temp file + rename).
void write_text_atomic(const std::filesystem::path &path, const std::string &text);
std::string read_text(const std::filesystem::path &path);

}  // namespace dab

#endif  // DAB_CONTAINER_HPP
