#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "edtd7/cli.hpp"
#include "edtd7/metrics.hpp"

namespace edtd7 {

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr std::array<Rgb, 8> kPalette{{{31, 119, 180},
                                        {255, 127, 14},
                                        {44, 160, 44},
                                        {214, 39, 40},
                                        {148, 103, 189},
                                        {140, 86, 75},
                                        {227, 119, 194},
                                        {127, 127, 127}}};

class Canvas {
 public:
  Canvas(int width, int height) : w_(width), h_(height), pixels_(static_cast<std::size_t>(width) * height * 3, 255) {}

  void blend(int x, int y, Rgb c, double opacity) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    auto* p = &pixels_[(static_cast<std::size_t>(y) * w_ + x) * 3];
    p[0] = static_cast<std::uint8_t>(std::lround(p[0] * (1 - opacity) + c.r * opacity));
    p[1] = static_cast<std::uint8_t>(std::lround(p[1] * (1 - opacity) + c.g * opacity));
    p[2] = static_cast<std::uint8_t>(std::lround(p[2] * (1 - opacity) + c.b * opacity));
  }

  void vertical_span(int x, int y0, int y1, Rgb c, double opacity) {
    if (y0 > y1) std::swap(y0, y1);
    for (int y = y0; y <= y1; ++y) blend(x, y, c, opacity);
  }

  // Thick line by stamping a small square along a DDA walk.
  void line(double x0, double y0, double x1, double y1, Rgb c, int thickness = 2) {
    const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))));
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      for (int dx = 0; dx < thickness; ++dx) {
        for (int dy = 0; dy < thickness; ++dy) blend(x + dx, y + dy, c, 1.0);
      }
    }
  }

  void write_png(const std::filesystem::path& path) const {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (fp == nullptr) throw std::runtime_error("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      std::fclose(fp);
      throw std::runtime_error("libpng failed writing " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, w_, h_, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h_; ++y) {
      png_write_row(png, const_cast<png_bytep>(&pixels_[static_cast<std::size_t>(y) * w_ * 3]));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
  }

 private:
  int w_, h_;
  std::vector<std::uint8_t> pixels_;
};

}  // namespace

Curve load_curve(const std::filesystem::path& run_dir) {
  std::vector<std::filesystem::path> logs;
  if (std::filesystem::exists(run_dir / "metrics.jsonl")) logs.push_back(run_dir / "metrics.jsonl");
  if (std::filesystem::is_directory(run_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "metrics.jsonl")) {
        logs.push_back(entry.path() / "metrics.jsonl");
      }
    }
  }
  std::ranges::sort(logs);

  // Normalized scores when every evaluation has one, raw returns otherwise.
  std::map<std::int64_t, std::vector<double>> by_step;
  bool normalized = true;
  std::vector<std::vector<MetricsRecord>> runs;
  for (const auto& log : logs) {
    runs.push_back(read_metrics(log));
    for (const auto& r : runs.back()) {
      if (r.eval_mean_return && !r.normalized_score) normalized = false;
    }
  }
  for (const auto& run : runs) {
    for (const auto& r : run) {
      const auto& v = normalized ? r.normalized_score : r.eval_mean_return;
      if (v) by_step[r.step].push_back(*v);
    }
  }
  if (by_step.empty()) throw std::runtime_error("no evaluation metrics found under " + run_dir.string());

  Curve curve;
  curve.label = run_dir.filename().string();
  if (curve.label.empty()) curve.label = run_dir.parent_path().filename().string();
  for (const auto& [step, values] : by_step) {
    const auto [mean, sd] = final_window_stats(values, values.size());
    curve.points.push_back({step, mean, sd, values.size()});
  }
  return curve;
}

std::vector<Curve> plot_learning_curves(const std::vector<std::filesystem::path>& run_dirs,
                                        const std::filesystem::path& output) {
  if (run_dirs.empty()) throw std::runtime_error("no run directories given");
  std::vector<Curve> curves;
  for (const auto& dir : run_dirs) curves.push_back(load_curve(dir));

  double x_min = INFINITY, x_max = -INFINITY, y_min = INFINITY, y_max = -INFINITY;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      x_min = std::min(x_min, static_cast<double>(p.step));
      x_max = std::max(x_max, static_cast<double>(p.step));
      y_min = std::min(y_min, p.mean - p.std);
      y_max = std::max(y_max, p.mean + p.std);
    }
  }
  if (x_max == x_min) x_max = x_min + 1;
  if (y_max - y_min < 1e-9) {
    y_min -= 1;
    y_max += 1;
  }
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;

  constexpr int kWidth = 960, kHeight = 600, kLeft = 60, kRight = 20, kTop = 20, kBottom = 50;
  Canvas canvas(kWidth, kHeight);
  auto px = [&](double step) { return kLeft + (step - x_min) / (x_max - x_min) * (kWidth - kLeft - kRight); };
  auto py = [&](double v) { return kTop + (y_max - v) / (y_max - y_min) * (kHeight - kTop - kBottom); };

  const Rgb axis{0, 0, 0};
  canvas.line(kLeft, kTop, kLeft, kHeight - kBottom, axis, 1);
  canvas.line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom, axis, 1);
  for (int tick = 0; tick <= 10; ++tick) {
    const double x = kLeft + tick * (kWidth - kLeft - kRight) / 10.0;
    canvas.line(x, kHeight - kBottom, x, kHeight - kBottom + 5, axis, 1);
    const double y = kTop + tick * (kHeight - kTop - kBottom) / 10.0;
    canvas.line(kLeft - 5, y, kLeft, y, axis, 1);
  }

  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const auto color = kPalette[ci % kPalette.size()];
    const auto& pts = curves[ci].points;
    // Band: interpolate mean +- std at every pixel column between points.
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const int xa = static_cast<int>(std::lround(px(static_cast<double>(pts[i].step))));
      const int xb = static_cast<int>(std::lround(px(static_cast<double>(pts[i + 1].step))));
      for (int x = xa; x < xb; ++x) {
        const double t = xb == xa ? 0.0 : static_cast<double>(x - xa) / (xb - xa);
        const double mean = pts[i].mean + t * (pts[i + 1].mean - pts[i].mean);
        const double sd = pts[i].std + t * (pts[i + 1].std - pts[i].std);
        if (sd > 0) {
          canvas.vertical_span(x, static_cast<int>(std::lround(py(mean + sd))),
                               static_cast<int>(std::lround(py(mean - sd))), color, 0.2);
        }
      }
    }
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      canvas.line(px(static_cast<double>(pts[i].step)), py(pts[i].mean), px(static_cast<double>(pts[i + 1].step)),
                  py(pts[i + 1].mean), color);
    }
    if (pts.size() == 1) {
      canvas.line(px(static_cast<double>(pts[0].step)) - 2, py(pts[0].mean), px(static_cast<double>(pts[0].step)) + 2,
                  py(pts[0].mean), color, 3);
    }
  }

  if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
  canvas.write_png(output);

  auto csv_path = output;
  csv_path.replace_extension(".csv");
  std::ofstream csv(csv_path);
  csv.precision(17);
  csv << "label,step,mean,std,seeds\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) csv << c.label << ',' << p.step << ',' << p.mean << ',' << p.std << ',' << p.seeds << '\n';
  }
  return curves;
}

}  // namespace edtd7
