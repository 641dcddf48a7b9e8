#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "macrotex/endian.hpp"
#include "macrotex/errors.hpp"
#include "macrotex/features.hpp"

namespace macrotex {

// Weights interchange format
// --------------------------
// A UTF-8 manifest plus one little-endian float32 blob. Manifest grammar:
//
//   macrotex-weights 1
//   blob <path relative to the manifest>
//   input_offset <v1> ... <vC>            (optional)
//   layer <kh> <kw> <in> <out> <stride> <pad> <phi> <offset> <length>
//   ...
//
// Per layer the blob holds out*in*kh*kw kernel floats in (out, in, kh, kw)
// order followed by the out bias floats; `length` is the byte count.

namespace detail {

inline std::uint32_t float_to_le(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  if (!host_is_little_endian())
    u = ((u & 0xff) << 24) | ((u & 0xff00) << 8) | ((u >> 8) & 0xff00) | (u >> 24);
  return u;
}

inline float le_to_float(std::uint32_t u) {
  if (!host_is_little_endian())
    u = ((u & 0xff) << 24) | ((u & 0xff00) << 8) | ((u >> 8) & 0xff00) | (u >> 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace detail

inline void save_weights(const ConvNetSpec& net, const std::string& manifest_path,
                         const std::string& blob_name) {
  namespace fs = std::filesystem;
  const fs::path mpath(manifest_path);
  const fs::path bpath = mpath.parent_path() / blob_name;

  std::ofstream blob(bpath, std::ios::binary);
  if (!blob) throw format_error("save_weights: cannot open blob " + bpath.string());
  std::ofstream man(mpath);
  if (!man) throw format_error("save_weights: cannot open manifest " + manifest_path);

  man << "macrotex-weights 1\n";
  man << "blob " << blob_name << "\n";
  if (!net.input_offset.empty()) {
    man << "input_offset";
    for (double v : net.input_offset) {
      std::ostringstream ss;
      ss.precision(17);
      ss << v;
      man << " " << ss.str();
    }
    man << "\n";
  }

  std::uint64_t offset = 0;
  for (const auto& layer : net.layers) {
    const std::uint64_t floats = layer.weight_count() + layer.bias.size();
    const std::uint64_t length = floats * 4;
    man << "layer " << layer.kh << " " << layer.kw << " " << layer.in_channels
        << " " << layer.out_channels << " " << layer.stride << " "
        << to_string(layer.pad) << " " << layer.phi.name << " " << offset << " "
        << length << "\n";
    auto put = [&](double v) {
      const std::uint32_t u = detail::float_to_le(static_cast<float>(v));
      blob.write(reinterpret_cast<const char*>(&u), 4);
    };
    for (double v : layer.weights) put(v);
    for (double v : layer.bias) put(v);
    offset += length;
  }
}

// Reproduces the stored 32-bit floats exactly (as doubles in memory).
// Layer selection is not part of the weights file; the returned spec has an
// empty selection for the caller to fill in.
inline ConvNetSpec load_weights(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream man(manifest_path);
  if (!man) throw format_error("load_weights: cannot open " + manifest_path);

  std::string line;
  if (!std::getline(man, line) || line != "macrotex-weights 1")
    throw format_error("load_weights: bad magic line in " + manifest_path);

  ConvNetSpec net;
  std::string blob_name;
  int layer_index = 0;
  struct PendingLayer {
    ConvLayer layer;
    std::uint64_t offset, length;
    int index;
  };
  std::vector<PendingLayer> pending;

  while (std::getline(man, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "blob") {
      ss >> blob_name;
    } else if (key == "input_offset") {
      double v;
      while (ss >> v) net.input_offset.push_back(v);
    } else if (key == "layer") {
      ++layer_index;
      PendingLayer pl;
      pl.index = layer_index;
      std::string pad_name, phi_name;
      ss >> pl.layer.kh >> pl.layer.kw >> pl.layer.in_channels >>
          pl.layer.out_channels >> pl.layer.stride >> pad_name >> phi_name >>
          pl.offset >> pl.length;
      if (!ss)
        throw format_error("load_weights: malformed layer " +
                           std::to_string(layer_index));
      pl.layer.pad = padding_mode(pad_name);
      try {
        pl.layer.phi = nonlinearity(phi_name);
      } catch (const format_error&) {
        throw format_error("load_weights: layer " + std::to_string(layer_index) +
                           ": unknown phi '" + phi_name + "'");
      }
      const std::uint64_t expected =
          (pl.layer.weight_count() + pl.layer.out_channels) * 4;
      if (pl.length != expected)
        throw format_error("load_weights: layer " + std::to_string(layer_index) +
                           ": length " + std::to_string(pl.length) +
                           " does not match declared shape (expected " +
                           std::to_string(expected) + ")");
      pending.push_back(std::move(pl));
    } else {
      throw format_error("load_weights: unknown manifest key '" + key + "'");
    }
  }
  if (blob_name.empty())
    throw format_error("load_weights: manifest missing blob line");

  const fs::path bpath = fs::path(manifest_path).parent_path() / blob_name;
  std::ifstream blob(bpath, std::ios::binary);
  if (!blob) throw format_error("load_weights: cannot open blob " + bpath.string());

  for (auto& pl : pending) {
    blob.seekg(static_cast<std::streamoff>(pl.offset));
    std::vector<std::uint32_t> raw(pl.length / 4);
    blob.read(reinterpret_cast<char*>(raw.data()), pl.length);
    if (static_cast<std::uint64_t>(blob.gcount()) != pl.length)
      throw format_error("load_weights: layer " + std::to_string(pl.index) +
                         ": blob truncated");
    const std::size_t nw = pl.layer.weight_count();
    pl.layer.weights.resize(nw);
    pl.layer.bias.resize(pl.layer.out_channels);
    for (std::size_t i = 0; i < nw; ++i)
      pl.layer.weights[i] = detail::le_to_float(raw[i]);
    for (int i = 0; i < pl.layer.out_channels; ++i)
      pl.layer.bias[i] = detail::le_to_float(raw[nw + i]);
    net.layers.push_back(std::move(pl.layer));
  }

  // Consecutive layers must compose.
  for (std::size_t j = 1; j < net.layers.size(); ++j)
    if (net.layers[j].in_channels != net.layers[j - 1].out_channels)
      throw format_error("load_weights: layer " + std::to_string(j + 1) +
                         ": input channels do not match previous layer output");
  return net;
}

// Layer-selection presets defined relative to a loaded net.
inline std::vector<int> layer_preset(const std::string& name) {
  if (name == "shallow3") return {3, 4, 5};
  if (name == "mid6") return {3, 4, 5, 6, 7, 11};
  if (name == "deep8") return {3, 4, 5, 6, 7, 11, 12, 14};
  throw config_error("layer_preset: unknown preset '" + name + "'");
}

}  // namespace macrotex
