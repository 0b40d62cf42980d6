#pragma once

#include <cstdint>
#include <string>

#include "svihmm/model.hpp"

namespace svihmm {

// Diagonally dominant benchmark: K = 8, p = 2, circulant transition matrix
// with 0.999 on the diagonal and 0.001 on the wrapping superdiagonal,
// well-separated unit-covariance Gaussian emissions, stationary (uniform)
// initial distribution.
HmmParams make_dd_params();

// Reversed cycles benchmark: K = 8, p = 2, two 3-state cycles visiting nearly
// identical means in opposite orders, linked by two rarely visited bridge
// states; covariances 20 * I. The printed source matrix has an impossible
// 9 in row 2, column 1 (the row would sum to 10); it is read as 0, which the
// constructor logs once.
HmmParams make_rc_params();

struct DatasetMeta {
  int version = 1;
  long T = 0;
  int p = 0;
  std::string generator;
  std::uint64_t seed = 0;
  std::uint64_t param_checksum = 0;  // FNV-1a over the generating parameters
  std::uint64_t data_checksum = 0;   // FNV-1a over the observation payload
  bool has_states = false;
};

struct DatasetFile {
  DatasetMeta meta;
  RowMatrix obs;
  std::vector<std::int32_t> states;  // empty unless has_states
};

std::uint64_t params_checksum(const HmmParams& params);

// Samples T observations from params and writes them to path. Binary layout:
// raw little-endian IEEE-754 doubles, row-major T x p, at `path`, with a
// line-oriented key:value sidecar at `path + ".meta"` and (optionally) the
// 0-based state labels as little-endian int32 at `path + ".states"`. If path
// ends in ".csv" everything goes into one CSV with `# key: value` comment
// lines, header t,y1,...,yp[,state], and 1-based t. Writes are byte-identical
// for identical inputs.
DatasetFile write_dataset(const std::string& path, const HmmParams& params, long T,
                          std::uint64_t seed, bool include_states,
                          const std::string& generator_name = "custom");

// Reads either format back; validates the declared shape against the payload
// and the payload checksum. Throws on truncation or checksum mismatch.
DatasetFile read_dataset(const std::string& path);

}  // namespace svihmm
