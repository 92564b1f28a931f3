#pragma once

#include "modlens/pca.hpp"

#include <string>
#include <vector>

namespace modlens::svg {

// All emitters return a standalone SVG document with deterministic bytes for
// a fixed input; figures are regenerable from their data files alone.

struct Series {
    std::string label;
    std::string color; // "#rrggbb"
    std::vector<double> x, y;
};

struct CurveSpec {
    std::string title;
    std::string x_label, y_label;
    std::vector<Series> series;
    int width = 760, height = 420;
};

std::string render_curve(const CurveSpec& spec);

struct HeatmapSpec {
    std::string title;
    std::string x_label, y_label;
    std::vector<double> x_values, y_values; // axis coordinates per cell
    const probe::Matrix* values = nullptr;  // [len(y), len(x)]
    int width = 560, height = 520;
};

std::string render_heatmap(const HeatmapSpec& spec);

struct ScatterSpec {
    std::string title;
    const probe::Matrix* points = nullptr; // [n, >=3], first three used
    const std::vector<int>* labels = nullptr; // class in [0,10)
    int width = 560, height = 520;
};

// Orthographic projection of the first three columns, colored by class.
std::string render_scatter3d(const ScatterSpec& spec);

struct ProbBarsSpec {
    std::string title;
    std::vector<std::string> position_labels; // one per column
    const probe::Matrix* rows = nullptr;      // [positions, vocab]
    int bar_height = 80;
};

std::string render_prob_bars(const ProbBarsSpec& spec);

// Shared palettes.
std::string sequential_color(double t);  // t in [0,1]
std::string categorical_color(int k);    // k in [0,10)

} // namespace modlens::svg
