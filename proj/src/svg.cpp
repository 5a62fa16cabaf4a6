#include "flow4d/svg.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace flow4d {

namespace {

const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                         "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

struct Pane {
    const char* label;
    int ax, ay;  // coordinate indices projected to (x, y)
    double x0;   // pane origin in canvas coordinates
};

}  // namespace

void write_flow_svg(const std::string& path, const FlowTensor& flow, double world_min,
                    double world_max) {
    const double pane = 280.0, margin = 20.0, gap = 20.0;
    const double width = 3 * pane + 2 * gap + 2 * margin;
    const double height = pane + 2 * margin + 16.0;
    double span = world_max - world_min;
    if (!(span > 0.0)) throw std::invalid_argument("write_flow_svg: bad world bounds");

    Pane panes[3] = {{"xy", 0, 1, margin},
                     {"xz", 0, 2, margin + pane + gap},
                     {"yz", 1, 2, margin + 2 * (pane + gap)}};

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write svg: " + path);
    char buf[256];

    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                  "viewBox=\"0 0 %.0f %.0f\">\n",
                  width, height, width, height);
    out << buf;
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (const Pane& p : panes) {
        std::snprintf(buf, sizeof(buf),
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" "
                      "stroke=\"#444\"/>\n",
                      p.x0, margin, pane, pane);
        out << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" fill=\"#444\">%s</text>\n",
                      p.x0 + 4.0, margin + pane + 14.0, p.label);
        out << buf;

        auto sx = [&](double v) { return p.x0 + (v - world_min) / span * pane; };
        auto sy = [&](double v) { return margin + pane - (v - world_min) / span * pane; };

        for (int n = 0; n < flow.N; ++n) {
            out << "<polyline fill=\"none\" stroke=\"" << kColors[n % 8]
                << "\" stroke-width=\"1\" points=\"";
            for (int k = 0; k < flow.K; ++k) {
                std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx(flow.at(k, n, p.ax)),
                              sy(flow.at(k, n, p.ay)));
                out << buf;
            }
            out << "\"/>\n";
            std::snprintf(buf, sizeof(buf),
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.2\" fill=\"%s\"/>\n",
                          sx(flow.at(flow.K - 1, n, p.ax)), sy(flow.at(flow.K - 1, n, p.ay)),
                          kColors[n % 8]);
            out << buf;
        }
    }
    out << "</svg>\n";
}

}  // namespace flow4d
