#include "svg.hpp"

#include "calib/error.hpp"

#include <cstdio>
#include <fstream>

namespace calib::svg {

namespace {

constexpr int kMargin = 40;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

const char* palette(int index) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[((index % 10) + 10) % 10];
}

Canvas::Canvas(double xmin, double xmax, double ymin, double ymax, int width, int height)
    : xmin_(xmin), xmax_(xmax), ymin_(ymin), ymax_(ymax), width_(width), height_(height) {
  if (!(xmax_ > xmin_)) xmax_ = xmin_ + 1.0;
  if (!(ymax_ > ymin_)) ymax_ = ymin_ + 1.0;
}

double Canvas::sx(double x) const { return kMargin + (x - xmin_) / (xmax_ - xmin_) * (width_ - 2 * kMargin); }
double Canvas::sy(double y) const { return height_ - kMargin - (y - ymin_) / (ymax_ - ymin_) * (height_ - 2 * kMargin); }

void Canvas::dot(Point p, int color, double radius) {
  body_ += "<circle cx=\"" + num(sx(p.x)) + "\" cy=\"" + num(sy(p.y)) + "\" r=\"" + num(radius) + "\" fill=\"" +
           palette(color) + "\"/>\n";
}

void Canvas::polyline(const std::vector<Point>& pts, int color, double stroke) {
  body_ += "<polyline fill=\"none\" stroke=\"" + std::string(palette(color)) + "\" stroke-width=\"" + num(stroke) +
           "\" points=\"";
  for (const Point& p : pts) body_ += num(sx(p.x)) + "," + num(sy(p.y)) + " ";
  body_ += "\"/>\n";
}

void Canvas::bar(double x0, double x1, double height, int color, double opacity) {
  const double top = sy(height), base = sy(ymin_);
  body_ += "<rect x=\"" + num(sx(x0)) + "\" y=\"" + num(top) + "\" width=\"" + num(sx(x1) - sx(x0)) +
           "\" height=\"" + num(base - top) + "\" fill=\"" + palette(color) + "\" fill-opacity=\"" + num(opacity) +
           "\"/>\n";
}

void Canvas::title(const std::string& text) {
  body_ += "<text x=\"" + num(width_ / 2.0) + "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">" + escape(text) + "</text>\n";
}

void Canvas::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path + " for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\"" << height_ << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << width_ - 2 * kMargin << "\" height=\""
      << height_ - 2 * kMargin << "\" fill=\"none\" stroke=\"#444\"/>\n";
  out << "<text x=\"" << kMargin << "\" y=\"" << height_ - 10 << "\" font-size=\"10\">" << num(xmin_) << "</text>\n";
  out << "<text x=\"" << width_ - kMargin << "\" y=\"" << height_ - 10 << "\" font-size=\"10\" text-anchor=\"end\">"
      << num(xmax_) << "</text>\n";
  out << body_ << "</svg>\n";
  if (!out) fail(ErrorCode::IoError, "failed writing " + path);
}

}  // namespace calib::svg
