#include "svihmm/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace svihmm {

namespace {

constexpr int kK = 8;
constexpr int kP = 2;

HmmParams build(const double (&trans)[kK][kK], const double (&means)[kK][kP], double cov_scale) {
  HmmParams params;
  params.trans.resize(kK, kK);
  for (int j = 0; j < kK; ++j)
    for (int l = 0; l < kK; ++l) params.trans(j, l) = trans[j][l];
  params.emissions.resize(kK);
  for (int j = 0; j < kK; ++j) {
    params.emissions[j].mean = Eigen::Vector2d(means[j][0], means[j][1]);
    params.emissions[j].cov = cov_scale * Matrix::Identity(kP, kP);
  }
  params.init_dist = stationary_distribution(params.trans);
  params.validate();
  return params;
}

}  // namespace

HmmParams make_dd_params() {
  double trans[kK][kK] = {};
  for (int j = 0; j < kK; ++j) {
    trans[j][j] = 0.999;
    trans[j][(j + 1) % kK] = 0.001;
  }
  const double means[kK][kP] = {{0, 20},  {20, 0},  {-90, -30}, {30, -30},
                                {-20, 0}, {0, -20}, {30, 30},   {-30, 30}};
  return build(trans, means, 1.0);
}

HmmParams make_rc_params() {
  static bool logged = false;
  if (!logged) {
    std::clog << "make_rc_params: reading row 2, column 1 of the source transition matrix as 0 "
                 "(printed value 9 would make the row sum to 10)\n";
    logged = true;
  }
  const double trans[kK][kK] = {
      {0.01, 0.99, 0, 0, 0, 0, 0, 0},
      {0, 0.01, 0.99, 0, 0, 0, 0, 0},  // row-2 correction applied
      {0.85, 0, 0, 0.15, 0, 0, 0, 0},
      {0, 0, 0, 0, 1, 0, 0, 0},
      {0, 0, 0, 0, 0.01, 0.99, 0, 0},
      {0, 0, 0, 0, 0, 0.01, 0.99, 0},
      {0, 0, 0, 0, 0.85, 0, 0, 0.15},
      {1, 0, 0, 0, 0, 0, 0, 0},
  };
  const double means[kK][kP] = {{-50, 0}, {30, -30}, {30, 30}, {-100, -10},
                                {40, -40}, {-65, 0}, {40, 40}, {100, 10}};
  return build(trans, means, 20.0);
}

namespace {

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* b = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_doubles(const double* v, std::size_t n, std::uint64_t h) {
  return fnv1a(v, n * sizeof(double), h);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void write_meta(const std::string& path, const DatasetMeta& meta) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_dataset: cannot open " + path);
  os << "version: " << meta.version << '\n'
     << "T: " << meta.T << '\n'
     << "p: " << meta.p << '\n'
     << "generator: " << meta.generator << '\n'
     << "seed: " << meta.seed << '\n'
     << "param_checksum: " << meta.param_checksum << '\n'
     << "data_checksum: " << meta.data_checksum << '\n'
     << "has_states: " << (meta.has_states ? 1 : 0) << '\n';
  if (!os) throw std::runtime_error("write_dataset: meta write failed");
}

DatasetMeta read_meta(std::istream& is) {
  DatasetMeta meta;
  std::string line;
  while (std::getline(is, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    std::istringstream value(line.substr(colon + 1));
    if (key == "version") value >> meta.version;
    else if (key == "T") value >> meta.T;
    else if (key == "p") value >> meta.p;
    else if (key == "generator") value >> meta.generator;
    else if (key == "seed") value >> meta.seed;
    else if (key == "param_checksum") value >> meta.param_checksum;
    else if (key == "data_checksum") value >> meta.data_checksum;
    else if (key == "has_states") {
      int v = 0;
      value >> v;
      meta.has_states = v != 0;
    }
  }
  if (meta.version != 1) throw std::runtime_error("read_dataset: unsupported version");
  if (meta.T < 1 || meta.p < 1) throw std::runtime_error("read_dataset: bad dimensions in metadata");
  return meta;
}

}  // namespace

std::uint64_t params_checksum(const HmmParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::int64_t k = params.num_states(), p = params.dim();
  h = fnv1a(&k, sizeof(k), h);
  h = fnv1a(&p, sizeof(p), h);
  h = hash_doubles(params.init_dist.data(), params.init_dist.size(), h);
  // Hash row-major so the layout is part of the format.
  for (int j = 0; j < k; ++j)
    for (int l = 0; l < k; ++l) h = hash_doubles(&params.trans(j, l), 1, h);
  for (const auto& e : params.emissions) {
    h = hash_doubles(e.mean.data(), e.mean.size(), h);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) h = hash_doubles(&e.cov(r, c), 1, h);
  }
  return h;
}

DatasetFile write_dataset(const std::string& path, const HmmParams& params, long T,
                          std::uint64_t seed, bool include_states,
                          const std::string& generator_name) {
  if (T < 2) throw std::invalid_argument("write_dataset: T must be at least 2");
  HmmSample sample = sample_hmm(params, T, seed);

  DatasetFile out;
  out.meta.T = T;
  out.meta.p = params.dim();
  out.meta.generator = generator_name;
  out.meta.seed = seed;
  out.meta.param_checksum = params_checksum(params);
  out.meta.data_checksum =
      hash_doubles(sample.obs.data(), static_cast<std::size_t>(T) * params.dim(),
                   0xcbf29ce484222325ULL);
  out.meta.has_states = include_states;
  out.obs = std::move(sample.obs);
  if (include_states) out.states = std::move(sample.states);

  if (ends_with(path, ".csv")) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_dataset: cannot open " + path);
    os << std::setprecision(17);
    os << "# version: 1\n# T: " << out.meta.T << "\n# p: " << out.meta.p
       << "\n# generator: " << out.meta.generator << "\n# seed: " << out.meta.seed
       << "\n# param_checksum: " << out.meta.param_checksum
       << "\n# data_checksum: " << out.meta.data_checksum
       << "\n# has_states: " << (include_states ? 1 : 0) << '\n';
    os << "t";
    for (int i = 1; i <= out.meta.p; ++i) os << ",y" << i;
    if (include_states) os << ",state";
    os << '\n';
    for (long t = 0; t < T; ++t) {
      os << (t + 1);
      for (int i = 0; i < out.meta.p; ++i) os << ',' << out.obs(t, i);
      if (include_states) os << ',' << out.states[t];
      os << '\n';
    }
    if (!os) throw std::runtime_error("write_dataset: CSV write failed");
  } else {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_dataset: cannot open " + path);
    os.write(reinterpret_cast<const char*>(out.obs.data()),
             static_cast<std::streamsize>(sizeof(double) * T * out.meta.p));
    if (!os) throw std::runtime_error("write_dataset: binary write failed");
    write_meta(path + ".meta", out.meta);
    if (include_states) {
      std::ofstream ss(path + ".states", std::ios::binary);
      if (!ss) throw std::runtime_error("write_dataset: cannot open " + path + ".states");
      ss.write(reinterpret_cast<const char*>(out.states.data()),
               static_cast<std::streamsize>(sizeof(std::int32_t) * T));
      if (!ss) throw std::runtime_error("write_dataset: states write failed");
    }
  }
  return out;
}

DatasetFile read_dataset(const std::string& path) {
  DatasetFile out;
  if (ends_with(path, ".csv")) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_dataset: cannot open " + path);
    std::string line;
    std::ostringstream meta_lines;
    while (is.peek() == '#') {
      std::getline(is, line);
      meta_lines << line.substr(1) << '\n';
    }
    std::istringstream meta_stream(meta_lines.str());
    out.meta = read_meta(meta_stream);
    if (!std::getline(is, line)) throw std::runtime_error("read_dataset: missing CSV header");
    out.obs.resize(out.meta.T, out.meta.p);
    if (out.meta.has_states) out.states.resize(out.meta.T);
    long rows = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (rows >= out.meta.T) throw std::runtime_error("read_dataset: more rows than declared");
      std::istringstream ls(line);
      std::string cell;
      std::getline(ls, cell, ',');  // t column
      for (int i = 0; i < out.meta.p; ++i) {
        if (!std::getline(ls, cell, ','))
          throw std::runtime_error("read_dataset: truncated CSV row");
        out.obs(rows, i) = std::stod(cell);
      }
      if (out.meta.has_states) {
        if (!std::getline(ls, cell, ','))
          throw std::runtime_error("read_dataset: truncated CSV row (missing state)");
        out.states[rows] = std::stoi(cell);
      }
      ++rows;
    }
    if (rows != out.meta.T)
      throw std::runtime_error("read_dataset: payload truncated (declared T = " +
                               std::to_string(out.meta.T) + ", found " + std::to_string(rows) + ")");
  } else {
    std::ifstream ms(path + ".meta");
    if (!ms) throw std::runtime_error("read_dataset: cannot open " + path + ".meta");
    out.meta = read_meta(ms);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_dataset: cannot open " + path);
    is.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::uint64_t>(is.tellg());
    const std::uint64_t expected = sizeof(double) * static_cast<std::uint64_t>(out.meta.T) * out.meta.p;
    if (bytes != expected)
      throw std::runtime_error("read_dataset: payload truncated (expected " +
                               std::to_string(expected) + " bytes, found " + std::to_string(bytes) + ")");
    is.seekg(0);
    out.obs.resize(out.meta.T, out.meta.p);
    is.read(reinterpret_cast<char*>(out.obs.data()), static_cast<std::streamsize>(expected));
    if (!is) throw std::runtime_error("read_dataset: observation read failed");
    if (out.meta.has_states) {
      std::ifstream ss(path + ".states", std::ios::binary);
      if (!ss) throw std::runtime_error("read_dataset: cannot open " + path + ".states");
      out.states.resize(out.meta.T);
      ss.read(reinterpret_cast<char*>(out.states.data()),
              static_cast<std::streamsize>(sizeof(std::int32_t) * out.meta.T));
      if (!ss) throw std::runtime_error("read_dataset: states read failed");
    }
  }

  const std::uint64_t checksum =
      hash_doubles(out.obs.data(), static_cast<std::size_t>(out.meta.T) * out.meta.p,
                   0xcbf29ce484222325ULL);
  if (checksum != out.meta.data_checksum)
    throw std::runtime_error("read_dataset: data checksum mismatch");
  return out;
}

}  // namespace svihmm
