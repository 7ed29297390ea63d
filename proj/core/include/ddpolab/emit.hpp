#pragma once

#include <string>
#include <vector>

#include "ddpolab/ddpo.hpp"
#include "ddpolab/tensor.hpp"

namespace ddpolab {

// Binary PGM (P5) grid of [0,1] grayscale images with 1-pixel separators;
// n images lay out in ceil(sqrt(n)) columns. Byte-deterministic. Throws on
// empty input or mixed shapes; I/O failures name the path.
void emit_grid(const std::vector<nn::Tensor>& images, const std::string& path);

// Writes base+".csv" (history rows) and base+".pgm" (line plot of mean
// reward per epoch). Throws on empty history.
void emit_curves(const std::vector<DdpoEpochStats>& history, const std::string& base);

}  // namespace ddpolab
