#include "somno/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "somno/errors.hpp"

namespace somno::svg {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string rgb(int r, int g, int b) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r & 0xff, g & 0xff, b & 0xff);
    return buf;
}

std::string heat_color(double v) {
    v = std::clamp(v, 0.0, 1.0);
    const int r = static_cast<int>(60 + v * (214 - 60));
    const int g = static_cast<int>(100 - v * (100 - 40));
    const int b = static_cast<int>(180 - v * (180 - 45));
    return rgb(r, g, b);
}

Document::Document(double width, double height) : width_(width), height_(height) {}

void Document::rect(double x, double y, double w, double h, const std::string& fill,
                    const std::string& stroke, double stroke_width) {
    body_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
          << "\" height=\"" << num(h) << "\" fill=\"" << fill << "\"";
    if (stroke != "none")
        body_ << " stroke=\"" << stroke << "\" stroke-width=\"" << num(stroke_width) << "\"";
    body_ << "/>\n";
}

void Document::line(double x1, double y1, double x2, double y2, const std::string& stroke,
                    double width, double opacity) {
    body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
          << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
          << num(width) << "\"";
    if (opacity < 1.0) body_ << " stroke-opacity=\"" << num(opacity) << "\"";
    body_ << "/>\n";
}

void Document::polyline(const std::vector<Point>& pts, const std::string& stroke, double width,
                        double opacity) {
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width)
          << "\"";
    if (opacity < 1.0) body_ << " stroke-opacity=\"" << num(opacity) << "\"";
    body_ << " points=\"";
    for (const auto& p : pts) body_ << num(p.x) << ',' << num(p.y) << ' ';
    body_ << "\"/>\n";
}

void Document::polygon(const std::vector<Point>& pts, const std::string& fill, double opacity) {
    body_ << "<polygon fill=\"" << fill << "\"";
    if (opacity < 1.0) body_ << " fill-opacity=\"" << num(opacity) << "\"";
    body_ << " points=\"";
    for (const auto& p : pts) body_ << num(p.x) << ',' << num(p.y) << ' ';
    body_ << "\"/>\n";
}

void Document::circle(double cx, double cy, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r)
          << "\" fill=\"" << fill << "\"/>\n";
}

void Document::text(double x, double y, const std::string& s, double size,
                    const std::string& anchor, const std::string& fill) {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << num(size)
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\" fill=\"" << fill
          << "\">" << escape(s) << "</text>\n";
}

std::string Document::str() const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width_) << "\" height=\""
       << num(height_) << "\" viewBox=\"0 0 " << num(width_) << ' ' << num(height_) << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
       << body_.str() << "</svg>\n";
    return os.str();
}

void Document::write(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << str();
    if (!os) throw DataError("write failed for " + path.string());
}

}  // namespace somno::svg
