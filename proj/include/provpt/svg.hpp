#pragma once

#include <string>
#include <vector>

namespace provpt {

// Minimal SVG plot writer: axes, polylines, stacked bars, heatmaps. Enough
// for the run reports; no plotting dependency.
class SvgPlot {
public:
    SvgPlot(double width, double height, std::string title);

    void set_axes(double xmin, double xmax, double ymin, double ymax,
                  const std::string& xlabel, const std::string& ylabel);

    void polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                  const std::string& color, const std::string& label = "");
    // One stacked bar at x; segment heights in data units, colors cycled.
    void stacked_bar(double x, double bar_width, const std::vector<double>& segments);
    // Heatmap cell in data coordinates with value-mapped fill (0..1 -> light..dark).
    void heat_cell(double x, double y, double w, double h, double value01);
    void text(double x, double y, const std::string& s);

    std::string finish();
    void write(const std::string& path);

    static const std::vector<std::string>& palette();

private:
    double px(double x) const;
    double py(double y) const;

    double width_, height_;
    std::string title_;
    double xmin_ = 0, xmax_ = 1, ymin_ = 0, ymax_ = 1;
    std::string xlabel_, ylabel_;
    std::vector<std::string> body_;
    std::vector<std::pair<std::string, std::string>> legend_;  // label, color
};

}  // namespace provpt
