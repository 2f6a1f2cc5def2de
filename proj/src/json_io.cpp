#include "rwave/json_io.hpp"

#include <json.hpp>
#include <stdexcept>

namespace rwave {

namespace {

using nlohmann::json;

std::string parity_name(Parity p) {
  switch (p) {
    case Parity::kOdd: return "odd";
    case Parity::kEven: return "even";
    default: return "none";
  }
}

Parity parity_from_name(const std::string& s) {
  if (s == "odd") return Parity::kOdd;
  if (s == "even") return Parity::kEven;
  if (s == "none") return Parity::kNone;
  throw std::invalid_argument("unknown parity: " + s);
}

}  // namespace

std::string to_json(const FourierSeries1D& f) {
  json entries = json::array();
  for (int n = -f.N; n <= f.N; ++n) {
    const Complex c = f.coeff(n);
    if (c == Complex(0.0, 0.0)) continue;
    entries.push_back({n, c.real(), c.imag()});
  }
  json j;
  j["cutoff"] = f.N;
  j["parity"] = parity_name(f.parity);
  j["reality"] = f.reality;
  j["entries"] = std::move(entries);
  return j.dump(2);
}

std::string to_json(const FourierSeries2D& u) {
  json entries = json::array();
  for (int n = -u.N; n <= u.N; ++n) {
    for (int m = -u.N; m <= u.N; ++m) {
      const Complex c = u.coeff(n, m);
      if (c == Complex(0.0, 0.0)) continue;
      entries.push_back({n, m, c.real(), c.imag()});
    }
  }
  json j;
  j["cutoff"] = u.N;
  j["dirichlet_symmetry"] = u.dirichlet_symmetry;
  j["entries"] = std::move(entries);
  return j.dump(2);
}

FourierSeries1D series1d_from_json(const std::string& text) {
  const json j = json::parse(text);
  FourierSeries1D f(j.at("cutoff").get<int>(),
                    parity_from_name(j.at("parity").get<std::string>()),
                    j.at("reality").get<bool>());
  for (const auto& e : j.at("entries")) {
    f.set_coeff(e.at(0).get<int>(),
                Complex(e.at(1).get<double>(), e.at(2).get<double>()));
  }
  return f;
}

FourierSeries2D series2d_from_json(const std::string& text) {
  const json j = json::parse(text);
  FourierSeries2D u(j.at("cutoff").get<int>(),
                    j.at("dirichlet_symmetry").get<bool>());
  for (const auto& e : j.at("entries")) {
    u.set_coeff(e.at(0).get<int>(), e.at(1).get<int>(),
                Complex(e.at(2).get<double>(), e.at(3).get<double>()));
  }
  return u;
}

}  // namespace rwave
