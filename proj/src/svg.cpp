#include "provpt/svg.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace provpt {

namespace {
constexpr double kMarginL = 56, kMarginR = 16, kMarginT = 32, kMarginB = 40;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}
}  // namespace

const std::vector<std::string>& SvgPlot::palette() {
    static const std::vector<std::string> p = {"#4c78a8", "#f58518", "#54a24b", "#e45756",
                                               "#72b7b2", "#b279a2", "#9d755d", "#bab0ac"};
    return p;
}

SvgPlot::SvgPlot(double width, double height, std::string title)
    : width_(width), height_(height), title_(std::move(title)) {}

void SvgPlot::set_axes(double xmin, double xmax, double ymin, double ymax,
                       const std::string& xlabel, const std::string& ylabel) {
    xmin_ = xmin;
    xmax_ = xmax == xmin ? xmin + 1 : xmax;
    ymin_ = ymin;
    ymax_ = ymax == ymin ? ymin + 1 : ymax;
    xlabel_ = xlabel;
    ylabel_ = ylabel;
}

double SvgPlot::px(double x) const {
    return kMarginL + (x - xmin_) / (xmax_ - xmin_) * (width_ - kMarginL - kMarginR);
}

double SvgPlot::py(double y) const {
    return height_ - kMarginB - (y - ymin_) / (ymax_ - ymin_) * (height_ - kMarginT - kMarginB);
}

void SvgPlot::polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                       const std::string& color, const std::string& label) {
    if (xs.size() != ys.size()) throw std::invalid_argument("SvgPlot::polyline: size mismatch");
    std::ostringstream s;
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < xs.size(); ++i) s << fmt(px(xs[i])) << ',' << fmt(py(ys[i])) << ' ';
    s << "\"/>";
    body_.push_back(s.str());
    if (!label.empty()) legend_.push_back({label, color});
}

void SvgPlot::stacked_bar(double x, double bar_width, const std::vector<double>& segments) {
    double acc = 0.0;
    const auto& pal = palette();
    for (size_t i = 0; i < segments.size(); ++i) {
        const double y0 = acc;
        const double y1 = acc + segments[i];
        acc = y1;
        std::ostringstream s;
        s << "<rect x=\"" << fmt(px(x - bar_width / 2)) << "\" y=\"" << fmt(py(y1)) << "\" width=\""
          << fmt(px(x + bar_width / 2) - px(x - bar_width / 2)) << "\" height=\"" << fmt(py(y0) - py(y1))
          << "\" fill=\"" << pal[i % pal.size()] << "\"/>";
        body_.push_back(s.str());
    }
}

void SvgPlot::heat_cell(double x, double y, double w, double h, double value01) {
    const double v = value01 < 0 ? 0 : (value01 > 1 ? 1 : value01);
    const int r = static_cast<int>(255 - 200 * v);
    const int g = static_cast<int>(245 - 180 * v);
    const int b = 255;
    std::ostringstream s;
    s << "<rect x=\"" << fmt(px(x)) << "\" y=\"" << fmt(py(y + h)) << "\" width=\"" << fmt(px(x + w) - px(x))
      << "\" height=\"" << fmt(py(y) - py(y + h)) << "\" fill=\"rgb(" << r << ',' << g << ',' << b
      << ")\" stroke=\"#ddd\" stroke-width=\"0.3\"/>";
    body_.push_back(s.str());
}

void SvgPlot::text(double x, double y, const std::string& s) {
    std::ostringstream o;
    o << "<text x=\"" << fmt(px(x)) << "\" y=\"" << fmt(py(y)) << "\" font-size=\"10\">" << s << "</text>";
    body_.push_back(o.str());
}

std::string SvgPlot::finish() {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\"" << height_
        << "\" viewBox=\"0 0 " << width_ << ' ' << height_ << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width_ / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title_
        << "</text>\n";
    // axes
    out << "<line x1=\"" << kMarginL << "\" y1=\"" << height_ - kMarginB << "\" x2=\"" << width_ - kMarginR
        << "\" y2=\"" << height_ - kMarginB << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\"" << kMarginL << "\" y2=\""
        << height_ - kMarginB << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << (width_ / 2) << "\" y=\"" << height_ - 8 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << xlabel_ << "</text>\n";
    out << "<text x=\"14\" y=\"" << height_ / 2 << "\" font-size=\"11\" transform=\"rotate(-90 14 " << height_ / 2
        << ")\" text-anchor=\"middle\">" << ylabel_ << "</text>\n";
    // tick labels at the extremes
    out << "<text x=\"" << kMarginL << "\" y=\"" << height_ - kMarginB + 14 << "\" font-size=\"9\">" << fmt(xmin_)
        << "</text>\n";
    out << "<text x=\"" << width_ - kMarginR << "\" y=\"" << height_ - kMarginB + 14
        << "\" text-anchor=\"end\" font-size=\"9\">" << fmt(xmax_) << "</text>\n";
    out << "<text x=\"" << kMarginL - 4 << "\" y=\"" << height_ - kMarginB << "\" text-anchor=\"end\" font-size=\"9\">"
        << fmt(ymin_) << "</text>\n";
    out << "<text x=\"" << kMarginL - 4 << "\" y=\"" << kMarginT + 4 << "\" text-anchor=\"end\" font-size=\"9\">"
        << fmt(ymax_) << "</text>\n";
    for (const std::string& b : body_) out << b << '\n';
    double ly = kMarginT + 6;
    for (const auto& [label, color] : legend_) {
        out << "<rect x=\"" << width_ - kMarginR - 110 << "\" y=\"" << ly - 8
            << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>";
        out << "<text x=\"" << width_ - kMarginR - 96 << "\" y=\"" << ly << "\" font-size=\"10\">" << label
            << "</text>\n";
        ly += 14;
    }
    out << "</svg>\n";
    return out.str();
}

void SvgPlot::write(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("SvgPlot::write: cannot open " + path);
    f << finish();
}

}  // namespace provpt

