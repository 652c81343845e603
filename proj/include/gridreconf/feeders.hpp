#pragma once

#include <array>
#include <memory>

#include "gridreconf/network.hpp"

namespace gridreconf::feeders {

// Baran & Wu 33-bus feeder: 12.66 kV, impedances in ohm, loads in kW / kvar.
namespace detail {
struct RawLine {
  int from, to;
  double r_ohm, x_ohm;
};
struct RawLoad {
  double p_kw, q_kvar;
};

inline constexpr std::array<RawLine, 37> kIeee33Lines{{
    {1, 2, 0.0922, 0.0470},   {2, 3, 0.4930, 0.2511},   {3, 4, 0.3660, 0.1864},
    {4, 5, 0.3811, 0.1941},   {5, 6, 0.8190, 0.7070},   {6, 7, 0.1872, 0.6188},
    {7, 8, 0.7114, 0.2351},   {8, 9, 1.0300, 0.7400},   {9, 10, 1.0440, 0.7400},
    {10, 11, 0.1966, 0.0650}, {11, 12, 0.3744, 0.1238}, {12, 13, 1.4680, 1.1550},
    {13, 14, 0.5416, 0.7129}, {14, 15, 0.5910, 0.5260}, {15, 16, 0.7463, 0.5450},
    {16, 17, 1.2890, 1.7210}, {17, 18, 0.7320, 0.5740}, {2, 19, 0.1640, 0.1565},
    {19, 20, 1.5042, 1.3554}, {20, 21, 0.4095, 0.4784}, {21, 22, 0.7089, 0.9373},
    {3, 23, 0.4512, 0.3083},  {23, 24, 0.8980, 0.7091}, {24, 25, 0.8960, 0.7011},
    {6, 26, 0.2030, 0.1034},  {26, 27, 0.2842, 0.1447}, {27, 28, 1.0590, 0.9337},
    {28, 29, 0.8042, 0.7006}, {29, 30, 0.5075, 0.2585}, {30, 31, 0.9744, 0.9630},
    {31, 32, 0.3105, 0.3619}, {32, 33, 0.3410, 0.5302},
    // tie lines
    {8, 21, 2.0, 2.0},        {9, 15, 2.0, 2.0},        {12, 22, 2.0, 2.0},
    {18, 33, 0.5, 0.5},       {25, 29, 0.5, 0.5},
}};

inline constexpr std::array<RawLoad, 33> kIeee33Loads{{
    {0, 0},     {100, 60},  {90, 40},   {120, 80},  {60, 30},   {60, 20},   {200, 100},
    {200, 100}, {60, 20},   {60, 20},   {45, 30},   {60, 35},   {60, 35},   {120, 80},
    {60, 10},   {60, 20},   {60, 20},   {90, 40},   {90, 40},   {90, 40},   {90, 40},
    {90, 40},   {90, 50},   {420, 200}, {420, 200}, {60, 25},   {60, 25},   {60, 20},
    {120, 70},  {200, 600}, {150, 70},  {210, 100}, {60, 40},
}};
}  // namespace detail

/// IEEE 33-bus test feeder on a 12.66 kV / 1 MVA base. Every line is switchable;
/// the five tie lines are normally open.
inline Network ieee33() {
  constexpr double kv_base = 12.66;
  constexpr double mva_base = 1.0;
  const double z_base = kv_base * kv_base / mva_base;

  std::vector<Bus> buses;
  for (int i = 0; i < 33; ++i) {
    const auto& ld = detail::kIeee33Loads[static_cast<std::size_t>(i)];
    buses.push_back(Bus{i + 1, Complex{ld.p_kw / 1000.0 / mva_base, ld.q_kvar / 1000.0 / mva_base}, i == 0});
  }
  std::vector<Line> lines;
  for (const auto& raw : detail::kIeee33Lines)
    lines.push_back(Line{LinePair{raw.from, raw.to}, raw.r_ohm / z_base, raw.x_ohm / z_base, true, std::nullopt});

  std::vector<LinePair> ties{{8, 21}, {9, 15}, {12, 22}, {18, 33}, {25, 29}};
  return Network(std::move(buses), std::move(lines), mva_base, std::move(ties), "ieee33");
}

inline NetworkPtr ieee33_ptr() { return std::make_shared<const Network>(ieee33()); }

}  // namespace gridreconf::feeders
