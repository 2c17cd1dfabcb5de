#pragma once

// Minimal static SVG output for scatter plots, histograms and polylines.

#include <string>
#include <vector>

namespace calib::svg {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

class Canvas {
 public:
  Canvas(double xmin, double xmax, double ymin, double ymax, int width = 640, int height = 480);

  void dot(Point p, int color, double radius = 1.5);
  void polyline(const std::vector<Point>& pts, int color, double stroke = 1.0);
  void bar(double x0, double x1, double height, int color, double opacity = 0.5);
  void title(const std::string& text);

  // Throws IoError when the file cannot be written.
  void save(const std::string& path) const;

 private:
  double sx(double x) const;
  double sy(double y) const;

  double xmin_, xmax_, ymin_, ymax_;
  int width_, height_;
  std::string body_;
};

const char* palette(int index);

}  // namespace calib::svg
