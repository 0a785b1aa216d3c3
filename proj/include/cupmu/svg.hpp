// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace cupmu::svg {

// Fixed-precision number formatting keeps output byte-stable.
inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

/// Categorical palette; wraps after ten entries.
inline const char* palette(std::size_t k) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[k % 10];
}

class Document {
public:
    Document(double width, double height) : width_(width), height_(height) {}

    void rect(double x, double y, double w, double h, const std::string& fill, double opacity = 1.0) {
        body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
                 "\" fill=\"" + fill + "\"";
        if (opacity < 1.0) body_ += " fill-opacity=\"" + num(opacity) + "\"";
        body_ += "/>\n";
    }

    void circle(double cx, double cy, double r, const std::string& fill) {
        body_ += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) + "\" fill=\"" + fill + "\"/>\n";
    }

    void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
        body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
                 "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"/>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width = 1.5) {
        if (pts.empty()) return;
        body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i) body_ += ' ';
            body_ += num(pts[i].first) + "," + num(pts[i].second);
        }
        body_ += "\"/>\n";
    }

    void text(double x, double y, const std::string& s, double size = 12.0, const std::string& anchor = "start") {
        body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" + num(size) +
                 "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
    }

    std::string str() const {
        return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width_) + "\" height=\"" + num(height_) +
               "\" viewBox=\"0 0 " + num(width_) + " " + num(height_) + "\">\n" + body_ + "</svg>\n";
    }

private:
    double width_, height_;
    std::string body_;
};

/// Linear data-to-pixel map for a plot area; y grows upward in data space.
struct Axes {
    double left, top, width, height;
    double x_min, x_max, y_min, y_max;

    double px(double x) const { return left + (x - x_min) / (x_max - x_min) * width; }
    double py(double y) const { return top + height - (y - y_min) / (y_max - y_min) * height; }

    void draw_frame(Document& doc, const std::string& xlabel, const std::string& ylabel, int ticks = 5) const {
        doc.line(left, top + height, left + width, top + height, "#000");
        doc.line(left, top, left, top + height, "#000");
        for (int i = 0; i <= ticks; ++i) {
            const double fx = x_min + (x_max - x_min) * i / ticks;
            const double fy = y_min + (y_max - y_min) * i / ticks;
            doc.line(px(fx), top + height, px(fx), top + height + 4, "#000");
            doc.text(px(fx), top + height + 16, num(fx).substr(0, num(fx).size() - 1), 10, "middle");
            doc.line(left - 4, py(fy), left, py(fy), "#000");
            doc.text(left - 6, py(fy) + 3, num(fy).substr(0, num(fy).size() - 1), 10, "end");
        }
        doc.text(left + width / 2, top + height + 32, xlabel, 12, "middle");
        doc.text(left - 40, top + height / 2, ylabel, 12, "middle");
    }
};

}  // namespace cupmu::svg
