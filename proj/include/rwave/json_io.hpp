#pragma once

#include <string>

#include "rwave/series.hpp"

namespace rwave {

// Coefficient tables as JSON. Entries are sorted lexicographically (n, then
// m) and zero coefficients are omitted, so output is stable and diffable.
// 1D: {"cutoff": N, "parity": "...", "reality": b, "entries": [[n,re,im]...]}
// 2D: {"cutoff": N, "dirichlet_symmetry": b, "entries": [[n,m,re,im]...]}
std::string to_json(const FourierSeries1D& f);
std::string to_json(const FourierSeries2D& u);

FourierSeries1D series1d_from_json(const std::string& text);
FourierSeries2D series2d_from_json(const std::string& text);

}  // namespace rwave
