#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

// Just enough SVG to draw traces, bands and bars. Everything is written as
// plain elements; no scripting, no external references.

namespace somno::svg {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

std::string rgb(int r, int g, int b);

// Two-stop blue-to-red scale for saliency; v is clamped to [0, 1].
std::string heat_color(double v);

class Document {
  public:
    Document(double width, double height);

    void rect(double x, double y, double w, double h, const std::string& fill,
              const std::string& stroke = "none", double stroke_width = 0.0);
    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double width, double opacity = 1.0);
    void polyline(const std::vector<Point>& pts, const std::string& stroke, double width,
                  double opacity = 1.0);
    void polygon(const std::vector<Point>& pts, const std::string& fill, double opacity = 1.0);
    void circle(double cx, double cy, double r, const std::string& fill);
    // anchor: start, middle or end.
    void text(double x, double y, const std::string& s, double size,
              const std::string& anchor = "start", const std::string& fill = "#222222");

    std::string str() const;
    void write(const std::filesystem::path& path) const;

    double width() const { return width_; }
    double height() const { return height_; }

  private:
    double width_;
    double height_;
    std::ostringstream body_;
};

}  // namespace somno::svg
