#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "synth/dataset_io.hpp"

namespace rdi {

namespace {

struct Canvas {
  int w, h;
  std::vector<uint8_t> px;  // rgb interleaved

  Canvas(int w_, int h_) : w(w_), h(h_), px(static_cast<size_t>(w_) * h_ * 3, 250) {}

  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    const size_t i = (static_cast<size_t>(y) * w + x) * 3;
    px[i] = r;
    px[i + 1] = g;
    px[i + 2] = b;
  }

  void line(double x0, double y0, double x1, double y1, uint8_t r, uint8_t g, uint8_t b) {
    const double dx = x1 - x0, dy = y1 - y0;
    const int steps = std::max(2, static_cast<int>(std::ceil(std::max(std::fabs(dx), std::fabs(dy)))) * 2);
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      set(static_cast<int>(std::lround(x0 + t * dx)),
          static_cast<int>(std::lround(y0 + t * dy)), r, g, b);
    }
  }
};

// 3x5 digit font, '0'-'9', '.', '-', 'e'
const char* glyph(char c) {
  switch (c) {
    case '0': return "111101101101111";
    case '1': return "010110010010111";
    case '2': return "111001111100111";
    case '3': return "111001111001111";
    case '4': return "101101111001001";
    case '5': return "111100111001111";
    case '6': return "111100111101111";
    case '7': return "111001010010010";
    case '8': return "111101111101111";
    case '9': return "111101111001111";
    case '.': return "000000000000010";
    case '-': return "000000111000000";
    case '+': return "000010111010000";
    case 'e': return "011101110100011";
    default: return "000000000000000";
  }
}

void draw_text(Canvas& c, int x, int y, const std::string& text) {
  for (size_t i = 0; i < text.size(); ++i) {
    const char* g = glyph(text[i]);
    for (int gy = 0; gy < 5; ++gy)
      for (int gx = 0; gx < 3; ++gx)
        if (g[gy * 3 + gx] == '1')
          c.set(x + static_cast<int>(i) * 4 + gx, y + gy, 40, 40, 40);
  }
}

std::string fmt_tick(double v) {
  std::ostringstream os;
  if (v != 0 && (std::fabs(v) >= 1e4 || std::fabs(v) < 1e-3))
    os << std::scientific;
  os.precision(3);
  os << v;
  std::string s = os.str();
  if (s.size() > 9) s = s.substr(0, 9);
  return s;
}

}  // namespace

void plot_series(const std::filesystem::path& out_png, const std::string& /*title*/,
                 const std::vector<double>& xs, const std::vector<double>& ys,
                 int width, int height) {
  if (xs.size() != ys.size() || xs.empty())
    throw std::invalid_argument("plot_series: xs/ys must be equal sized and non-empty");
  Canvas c(width, height);
  const int ml = 58, mr = 12, mt = 12, mb = 24;
  double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0];
  for (size_t i = 0; i < xs.size(); ++i) {
    xmin = std::min(xmin, xs[i]);
    xmax = std::max(xmax, xs[i]);
    if (std::isfinite(ys[i])) {
      ymin = std::min(ymin, ys[i]);
      ymax = std::max(ymax, ys[i]);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  auto py = [&](double y) {
    return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
  };
  c.line(ml, mt, ml, height - mb, 90, 90, 90);
  c.line(ml, height - mb, width - mr, height - mb, 90, 90, 90);
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    draw_text(c, 4, static_cast<int>(py(yv)) - 2, fmt_tick(yv));
    c.line(ml - 3, py(yv), ml, py(yv), 90, 90, 90);
    const double xv = xmin + (xmax - xmin) * k / 4.0;
    draw_text(c, static_cast<int>(px(xv)) - 8, height - mb + 6, fmt_tick(xv));
  }
  for (size_t i = 1; i < xs.size(); ++i) {
    if (!std::isfinite(ys[i - 1]) || !std::isfinite(ys[i])) continue;
    c.line(px(xs[i - 1]), py(ys[i - 1]), px(xs[i]), py(ys[i]), 30, 60, 180);
  }
  synth::write_png_rgb8(out_png, width, height, c.px);
}

std::vector<std::filesystem::path> plot_csv(const std::filesystem::path& csv,
                                            const std::filesystem::path& out_dir) {
  std::ifstream f(csv);
  if (!f) throw std::runtime_error("plot_csv: cannot open " + csv.string());
  std::string header;
  if (!std::getline(f, header)) throw std::runtime_error("plot_csv: empty csv");
  std::vector<std::string> cols;
  {
    std::istringstream is(header);
    std::string tok;
    while (std::getline(is, tok, ',')) cols.push_back(tok);
  }
  std::vector<std::vector<double>> data(cols.size());
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string tok;
    size_t k = 0;
    while (std::getline(is, tok, ',') && k < cols.size()) {
      try {
        data[k].push_back(std::stod(tok));
      } catch (...) {
        data[k].push_back(std::nan(""));
      }
      ++k;
    }
  }
  if (data[0].empty()) throw std::runtime_error("plot_csv: no data rows");
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (size_t k = 1; k < cols.size(); ++k) {
    const auto out = out_dir / ("plot_" + cols[k] + ".png");
    plot_series(out, cols[k], data[0], data[k]);
    written.push_back(out);
  }
  return written;
}

void write_image_grid(const std::filesystem::path& out_png,
                      const std::vector<std::vector<RgbFrame>>& rows) {
  if (rows.empty() || rows[0].empty())
    throw std::invalid_argument("write_image_grid: empty grid");
  const int fh = rows[0][0].h, fw = rows[0][0].w;
  const int pad = 2;
  size_t ncols = 0;
  for (const auto& r : rows) ncols = std::max(ncols, r.size());
  const int W = static_cast<int>(ncols) * (fw + pad) + pad;
  const int H = static_cast<int>(rows.size()) * (fh + pad) + pad;
  std::vector<uint8_t> px(static_cast<size_t>(W) * H * 3, 255);
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t cidx = 0; cidx < rows[r].size(); ++cidx) {
      const RgbFrame& f = rows[r][cidx];
      if (f.h != fh || f.w != fw)
        throw std::invalid_argument("write_image_grid: frame size mismatch");
      const auto q = denormalize_rgb(f);
      const int ox = pad + static_cast<int>(cidx) * (fw + pad);
      const int oy = pad + static_cast<int>(r) * (fh + pad);
      for (int y = 0; y < fh; ++y)
        for (int x = 0; x < fw; ++x)
          for (int c = 0; c < 3; ++c)
            px[((static_cast<size_t>(oy + y) * W) + ox + x) * 3 + static_cast<size_t>(c)] =
                static_cast<uint8_t>(q[(static_cast<size_t>(c) * fh + y) * fw + x]);
    }
  synth::write_png_rgb8(out_png, W, H, px);
}

}  // namespace rdi
