#pragma once

// Model file ("LYNN", little-endian):
//   magic "LYNN" | version u32 | n_outputs u32
//   | in_len u32 | conv1 out/kernel/dilation u32 x3 | conv2 out/kernel/dilation u32 x3
//   | parameter count u64 | parameters f64 (blocks in ModelParams order)

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>

#include "lyapnet/binary_io.hpp"
#include "lyapnet/cnn.hpp"

namespace lyapnet {

inline constexpr std::uint32_t kModelVersion = 1;

inline void write_model(std::ostream& os, const ModelParams& p) {
  const auto& a = p.arch();
  binio::put_magic(os, "LYNN");
  binio::put_uint<std::uint32_t>(os, kModelVersion);
  binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(a.n_outputs));
  binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(a.in_len));
  for (const auto& c : {a.conv1, a.conv2}) {
    binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(c.out_channels));
    binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(c.kernel));
    binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(c.dilation));
  }
  binio::put_uint<std::uint64_t>(os, static_cast<std::uint64_t>(p.values().size()));
  for (double v : p.values()) binio::put_f64(os, v);
}

/// Reads a model; when `expected_outputs` is given the file must match it
/// (3 for Lorenz, 6 for the coupled system).
inline ModelParams read_model(std::istream& is, const std::string& source = "<model>",
                              std::optional<int> expected_outputs = std::nullopt) {
  binio::Reader in(is, source);
  in.expect_magic("LYNN");
  const auto version = in.get_uint<std::uint32_t>("version");
  if (version != kModelVersion) in.fail(detail::concat("unsupported model version ", version));
  Architecture a;
  const auto small = [&](std::string_view what) {
    const auto v = in.get_uint<std::uint32_t>(what);
    if (v == 0 || v > (1u << 20)) in.fail(detail::concat("implausible ", what, " ", v));
    return static_cast<int>(v);
  };
  a.n_outputs = small("n_outputs");
  if (expected_outputs && a.n_outputs != *expected_outputs) {
    in.fail(detail::concat("model has ", a.n_outputs, " outputs but ", *expected_outputs, " were requested"));
  }
  a.in_len = small("in_len");
  for (ConvSpec* c : {&a.conv1, &a.conv2}) {
    c->out_channels = small("out_channels");
    c->kernel = small("kernel");
    c->dilation = small("dilation");
  }
  const auto count = in.get_uint<std::uint64_t>("parameter count");
  if (count != a.param_count()) {
    in.fail(detail::concat("parameter count ", count, " does not match architecture (", a.param_count(), ")"));
  }
  ModelParams p(a);
  for (double& v : p.values()) {
    v = in.get_f64("parameters");
    if (!std::isfinite(v)) in.fail("non-finite parameter");
  }
  in.expect_end();
  return p;
}

inline void save_model(const std::filesystem::path& path, const ModelParams& p) {
  binio::atomic_write(path, [&](std::ostream& os) { write_model(os, p); });
}

inline ModelParams load_model(const std::filesystem::path& path, std::optional<int> expected_outputs = std::nullopt) {
  auto is = binio::open_input(path);
  return read_model(is, path.string(), expected_outputs);
}

}  // namespace lyapnet
