// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gam/tensor.hpp"

namespace gam {

// GTEN tensor file: "GTEN", version byte 1, dtype byte (1 = f32, 2 = f64),
// uint16 LE rank, rank x uint32 LE dims, then the row-major payload in
// little-endian order. Bytes are written explicitly so files match on any
// host.
enum class Dtype : uint8_t { f32 = 1, f64 = 2 };

void write_gten(std::ostream& os, const Tensor& t, Dtype dt);
Tensor read_gten(std::istream& is, const std::string& context);

void write_gten_file(const std::string& path, const Tensor& t, Dtype dt);
Tensor read_gten_file(const std::string& path);

// Checkpoint container: a text manifest listing tensor names in order,
// terminated by END, followed by one f64 GTEN record per name.
//
//   GAMBUNDLE 1
//   tensor <name>
//   ...
//   END
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;
void write_bundle(const std::string& path, const NamedTensors& tensors);
NamedTensors read_bundle(const std::string& path);

// 8-bit binary PGM (P5, maxval 255). Used for label masks where the pixel
// value is the object id.
void write_pgm(const std::string& path, const Tensor& t);
Tensor read_pgm(const std::string& path);

}  // namespace gam
