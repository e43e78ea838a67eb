// Detection overlay rendering: box outlines plus a small class:score label
// drawn with a fixed 5x7 bitmap font.
#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "rgbdfuse/core.hpp"
#include "rgbdfuse/detect/geometry.hpp"

namespace rgbdfuse::overlay {

inline constexpr int k_box_thickness = 2;
inline constexpr int k_glyph_w = 5;
inline constexpr int k_glyph_h = 7;
inline constexpr int k_label_pad = 1;

// 5x7 glyphs, one byte per row, low 5 bits used
inline const std::array<std::uint8_t, 7>* glyph_rows(char c) {
  static const std::array<std::array<std::uint8_t, 7>, 12> glyphs = {{
      {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
      {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
      {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
      {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
      {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
      {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
      {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
      {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
      {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
      {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
      {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C},  // .
      {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00},  // :
  }};
  if (c >= '0' && c <= '9') return &glyphs[static_cast<std::size_t>(c - '0')];
  if (c == '.') return &glyphs[10];
  if (c == ':') return &glyphs[11];
  return nullptr;
}

inline std::array<std::uint8_t, 3> class_color(int class_id) {
  static const std::array<std::array<std::uint8_t, 3>, 9> palette = {{
      {230, 60, 60},
      {60, 200, 60},
      {70, 110, 240},
      {240, 200, 40},
      {200, 70, 220},
      {50, 210, 210},
      {245, 140, 30},
      {150, 230, 70},
      {235, 95, 160},
  }};
  return palette[static_cast<std::size_t>(class_id % 9)];
}

struct LabelRect {
  int x = 0, y = 0, w = 0, h = 0;
};

inline std::string detection_label(const detect::Detection& det) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%d:%.2f", det.class_id, det.score);
  return std::string(buf);
}

// label block location: inside the top-left corner of the box outline
inline LabelRect label_rect(const detect::Box& box, const std::string& text) {
  LabelRect r;
  r.x = static_cast<int>(round_half_away(box.x_min)) + k_box_thickness;
  r.y = static_cast<int>(round_half_away(box.y_min)) + k_box_thickness;
  r.w = static_cast<int>(text.size()) * (k_glyph_w + 1) + 2 * k_label_pad;
  r.h = k_glyph_h + 2 * k_label_pad;
  return r;
}

inline void set_pixel(ImageGrid<std::uint8_t>& img, int x, int y,
                      const std::array<std::uint8_t, 3>& color) {
  if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
  for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[static_cast<std::size_t>(c)];
}

inline void draw_box_outline(ImageGrid<std::uint8_t>& img, const detect::Box& box,
                             const std::array<std::uint8_t, 3>& color) {
  const int x0 = static_cast<int>(round_half_away(box.x_min));
  const int y0 = static_cast<int>(round_half_away(box.y_min));
  const int x1 = static_cast<int>(round_half_away(box.x_max)) - 1;
  const int y1 = static_cast<int>(round_half_away(box.y_max)) - 1;
  for (int t = 0; t < k_box_thickness; ++t) {
    for (int x = x0; x <= x1; ++x) {
      set_pixel(img, x, y0 + t, color);
      set_pixel(img, x, y1 - t, color);
    }
    for (int y = y0; y <= y1; ++y) {
      set_pixel(img, x0 + t, y, color);
      set_pixel(img, x1 - t, y, color);
    }
  }
}

inline void draw_label(ImageGrid<std::uint8_t>& img, const LabelRect& rect,
                       const std::string& text, const std::array<std::uint8_t, 3>& bg) {
  for (int y = 0; y < rect.h; ++y)
    for (int x = 0; x < rect.w; ++x) set_pixel(img, rect.x + x, rect.y + y, bg);
  const std::array<std::uint8_t, 3> fg{0, 0, 0};
  int cursor = rect.x + k_label_pad;
  for (char c : text) {
    const auto* rows = glyph_rows(c);
    if (rows) {
      for (int gy = 0; gy < k_glyph_h; ++gy)
        for (int gx = 0; gx < k_glyph_w; ++gx)
          if ((*rows)[static_cast<std::size_t>(gy)] >> (k_glyph_w - 1 - gx) & 1)
            set_pixel(img, cursor + gx, rect.y + k_label_pad + gy, fg);
    }
    cursor += k_glyph_w + 1;
  }
}

inline void draw_detections(ImageGrid<std::uint8_t>& img,
                            const std::vector<detect::Detection>& detections) {
  require(img.channels == 3, Errc::dimension_mismatch, "overlay expects a 3-channel image");
  for (const detect::Detection& det : detections) {
    const auto color = class_color(det.class_id);
    draw_box_outline(img, det.bbox, color);
    const std::string text = detection_label(det);
    draw_label(img, label_rect(det.bbox, text), text, color);
  }
}

}  // namespace rgbdfuse::overlay
