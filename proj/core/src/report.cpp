#include "ppap/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

#include "ppap/fsio.hpp"

namespace ppap {

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("csv schema mismatch: bad " + what + " value '" + s + "'");
    }
}

// family key for grouping and legends
std::string family_of(const CsvRow& r) {
    if (r.method == "none") return "none";
    const char* knob = r.method == "ppap" ? " r=" : (r.method == "si" ? " c=" : " λ=");
    return r.method + knob + fmt("%g", r.strength);
}

const char* family_color(const std::string& family, int index_in_method) {
    static const char* blues[] = {"#1f77b4", "#4a90c4", "#76aad4", "#a2c4e4"};
    static const char* oranges[] = {"#d62728", "#e05253", "#ea7e7e", "#f4a9a9"};
    static const char* greens[] = {"#2ca02c", "#56b356", "#80c680", "#aad9aa"};
    if (family.rfind("none", 0) == 0) return "#888888";
    if (family.rfind("ppap", 0) == 0) return blues[index_in_method % 4];
    if (family.rfind("si", 0) == 0) return oranges[index_in_method % 4];
    return greens[index_in_method % 4];
}

struct Svg {
    std::string body;
    double w, h;
    Svg(double width, double height) : w(width), h(height) {
        body += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", w) + "\" height=\"" +
                fmt("%.0f", h) + "\" viewBox=\"0 0 " + fmt("%.0f", w) + " " + fmt("%.0f", h) + "\">\n";
        body += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    }
    void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width,
              bool dashed = false) {
        body += "<line x1=\"" + fmt("%.2f", x1) + "\" y1=\"" + fmt("%.2f", y1) + "\" x2=\"" + fmt("%.2f", x2) +
                "\" y2=\"" + fmt("%.2f", y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
                fmt("%.2f", width) + "\"" + (dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
    }
    void rect(double x, double y, double rw, double rh, const std::string& fill) {
        body += "<rect x=\"" + fmt("%.2f", x) + "\" y=\"" + fmt("%.2f", y) + "\" width=\"" + fmt("%.2f", rw) +
                "\" height=\"" + fmt("%.2f", rh) + "\" fill=\"" + fill + "\"/>\n";
    }
    void circle(double cx, double cy, double r, const std::string& fill) {
        body += "<circle cx=\"" + fmt("%.2f", cx) + "\" cy=\"" + fmt("%.2f", cy) + "\" r=\"" + fmt("%.2f", r) +
                "\" fill=\"" + fill + "\"/>\n";
    }
    void text(double x, double y, const std::string& s, double size = 12, const std::string& anchor = "start",
              const std::string& fill = "#222222") {
        body += "<text x=\"" + fmt("%.2f", x) + "\" y=\"" + fmt("%.2f", y) + "\" font-size=\"" +
                fmt("%.0f", size) + "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\" fill=\"" +
                fill + "\">" + s + "</text>\n";
    }
    std::string finish() { return body + "</svg>\n"; }
};

// ordered families: none first, then by method name and strength
std::vector<std::string> order_families(const std::vector<CsvRow>& rows,
                                        std::map<std::string, std::pair<std::string, double>>& meta) {
    std::set<std::pair<std::pair<int, double>, std::string>> keyed;
    for (const auto& r : rows) {
        const std::string fam = family_of(r);
        const int rank = r.method == "none" ? 0 : r.method == "ppap" ? 1 : r.method == "si" ? 2 : 3;
        keyed.insert({{rank, r.strength}, fam});
        meta[fam] = {r.method, r.strength};
    }
    std::vector<std::string> out;
    for (const auto& [_, fam] : keyed) out.push_back(fam);
    return out;
}

} // namespace

std::string csv_line(const CsvRow& row) {
    std::string line = row.run_id + "," + row.method + "," + fmt("%g", row.strength) + "," + row.task_id +
                       "," + row.stage + "," + fmt("%.6f", row.accuracy) + ",";
    if (row.euclidean >= 0.0) line += fmt("%.6f", row.euclidean);
    line += "," + std::to_string(row.seed) + "," + fmt("%.3f", row.wall_seconds);
    return line;
}

void write_csv(const std::string& path, const std::vector<CsvRow>& rows) {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : rows) out += csv_line(r) + "\n";
    write_file_atomic(path, out);
}

std::vector<CsvRow> read_csv(const std::string& path) {
    const std::string text = read_file(path);
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    if (lines.empty() || lines[0] != kCsvHeader)
        throw std::runtime_error("csv schema mismatch: bad or missing header in " + path);
    std::vector<CsvRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split_fields(lines[i]);
        if (f.size() != 9)
            throw std::runtime_error("csv schema mismatch: line " + std::to_string(i + 1) + " has " +
                                     std::to_string(f.size()) + " fields, expected 9");
        CsvRow r;
        r.run_id = f[0];
        r.method = f[1];
        r.strength = parse_num(f[2], "strength-or-r");
        r.task_id = f[3];
        r.stage = f[4];
        r.accuracy = parse_num(f[5], "accuracy");
        r.euclidean = f[6].empty() ? -1.0 : parse_num(f[6], "euclidean-score");
        r.seed = static_cast<std::uint64_t>(parse_num(f[7], "seed"));
        r.wall_seconds = parse_num(f[8], "wall-time-seconds");
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_bar_chart(const std::string& path, const std::vector<CsvRow>& rows) {
    if (rows.empty()) throw std::runtime_error("chart needs at least one row");
    // final training stage = stage of the last emitted row
    const std::string final_stage = rows.back().stage;
    std::vector<CsvRow> sel;
    for (const auto& r : rows)
        if (r.stage == final_stage) sel.push_back(r);
    if (sel.empty()) throw std::runtime_error("chart needs at least one row");

    std::map<std::string, std::pair<std::string, double>> meta;
    const auto families = order_families(sel, meta);
    std::set<std::string> task_set;
    for (const auto& r : sel) task_set.insert(r.task_id);
    const std::vector<std::string> tasks(task_set.begin(), task_set.end());

    // mean accuracy over seeds per (family, task)
    std::map<std::pair<std::string, std::string>, std::pair<double, int>> agg;
    for (const auto& r : sel) {
        auto& [sum, cnt] = agg[{family_of(r), r.task_id}];
        sum += r.accuracy;
        cnt += 1;
    }

    const double ml = 56, mr = 16, mt = 28, mb = 64;
    const double plot_w = std::max<double>(360.0, 90.0 * static_cast<double>(tasks.size())),
                 plot_h = 300;
    Svg svg(ml + plot_w + mr, mt + plot_h + mb);
    auto ay = [&](double acc) { return mt + plot_h * (1.0 - acc); };
    for (int g = 0; g <= 5; ++g) {
        const double acc = g / 5.0;
        svg.line(ml, ay(acc), ml + plot_w, ay(acc), "#dddddd", 1);
        svg.text(ml - 8, ay(acc) + 4, fmt("%.1f", acc), 11, "end");
    }
    svg.line(ml, mt, ml, mt + plot_h, "#222222", 1);
    svg.line(ml, mt + plot_h, ml + plot_w, mt + plot_h, "#222222", 1);

    const double group_w = plot_w / static_cast<double>(tasks.size());
    const double bar_w = std::min(24.0, group_w * 0.8 / static_cast<double>(families.size()));
    std::map<std::string, int> method_rank;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const double gx = ml + group_w * (static_cast<double>(ti) + 0.5);
        const double total = bar_w * static_cast<double>(families.size());
        method_rank.clear();
        for (std::size_t fi = 0; fi < families.size(); ++fi) {
            const auto it = agg.find({families[fi], tasks[ti]});
            const int mi = method_rank[meta[families[fi]].first]++;
            if (it == agg.end()) continue;
            const double acc = it->second.first / it->second.second;
            const double x = gx - total / 2 + bar_w * static_cast<double>(fi);
            svg.rect(x, ay(acc), bar_w - 2, mt + plot_h - ay(acc), family_color(families[fi], mi));
        }
        svg.text(gx, mt + plot_h + 18, tasks[ti], 12, "middle");
    }

    method_rank.clear();
    double lx = ml;
    for (const auto& fam : families) {
        const int mi = method_rank[meta[fam].first]++;
        svg.rect(lx, mt + plot_h + 34, 12, 12, family_color(fam, mi));
        svg.text(lx + 16, mt + plot_h + 44, fam, 11);
        lx += 24 + 7.0 * static_cast<double>(fam.size());
    }
    svg.text(ml, 18, "validation accuracy by task (" + final_stage + ")", 13);
    write_file_atomic(path, svg.finish());
}

void write_scatter_chart(const std::string& path, const std::vector<CsvRow>& rows) {
    if (rows.empty()) throw std::runtime_error("chart needs at least one row");

    // pair probe (X) and finetune_end (Y) rows per (method, strength, seed, holdout token)
    auto hold_token = [](const std::string& task_id) {
        const auto pos = task_id.find("hold");
        return pos == std::string::npos ? task_id : task_id.substr(pos);
    };
    struct XY {
        double x = -1, y = -1;
    };
    std::map<std::string, XY> cells;
    std::map<std::string, std::pair<std::string, double>> fam_meta;
    std::map<std::string, std::pair<double, int>> fam_x, fam_y;
    double pre_sum = 0, deg_sum = 0, ft_none_sum = 0;
    int pre_n = 0, deg_n = 0, ft_none_n = 0;
    for (const auto& r : rows) {
        const std::string key = family_of(r) + "|" + std::to_string(r.seed) + "|" + hold_token(r.task_id);
        if (r.stage == "probe") cells[key].x = r.accuracy;
        if (r.stage == "finetune_end") cells[key].y = r.accuracy;
        if (r.stage == "pretrain_end" && r.method == "none") {
            pre_sum += r.accuracy;
            ++pre_n;
        }
        if (r.stage == "degraded" && r.method == "none") {
            deg_sum += r.accuracy;
            ++deg_n;
        }
        if (r.stage == "finetune_end" && r.method == "none") {
            ft_none_sum += r.accuracy;
            ++ft_none_n;
        }
        fam_meta[family_of(r)] = {r.method, r.strength};
    }
    for (const auto& [key, xy] : cells) {
        if (xy.x < 0 || xy.y < 0) continue;
        const std::string fam = key.substr(0, key.find('|'));
        fam_x[fam].first += xy.x;
        fam_x[fam].second += 1;
        fam_y[fam].first += xy.y;
        fam_y[fam].second += 1;
    }
    if (fam_x.empty()) throw std::runtime_error("scatter needs probe and finetune_end rows");

    const double ml = 56, mr = 180, mt = 28, mb = 48, plot = 360;
    Svg svg(ml + plot + mr, mt + plot + mb);
    auto px = [&](double v) { return ml + plot * v; };
    auto py = [&](double v) { return mt + plot * (1.0 - v); };
    for (int g = 0; g <= 5; ++g) {
        const double v = g / 5.0;
        svg.line(ml, py(v), ml + plot, py(v), "#eeeeee", 1);
        svg.line(px(v), mt, px(v), mt + plot, "#eeeeee", 1);
        svg.text(ml - 8, py(v) + 4, fmt("%.1f", v), 11, "end");
        svg.text(px(v), mt + plot + 16, fmt("%.1f", v), 11, "middle");
    }
    svg.line(ml, mt, ml, mt + plot, "#222222", 1);
    svg.line(ml, mt + plot, ml + plot, mt + plot, "#222222", 1);

    // dashed references: pretraining target (right, blue), degraded baseline
    // (left, red), finetuning target (top, blue)
    if (pre_n) svg.line(px(pre_sum / pre_n), mt, px(pre_sum / pre_n), mt + plot, "#1f77b4", 1.5, true);
    if (deg_n) svg.line(px(deg_sum / deg_n), mt, px(deg_sum / deg_n), mt + plot, "#d62728", 1.5, true);
    if (ft_none_n)
        svg.line(ml, py(ft_none_sum / ft_none_n), ml + plot, py(ft_none_sum / ft_none_n), "#1f77b4", 1.5, true);

    std::vector<CsvRow> fam_rows;
    for (const auto& [fam, meta] : fam_meta) {
        if (!fam_x.count(fam)) continue;
        CsvRow r;
        r.method = meta.first;
        r.strength = meta.second;
        fam_rows.push_back(r);
    }
    std::map<std::string, std::pair<std::string, double>> meta2;
    const auto families = order_families(fam_rows, meta2);
    std::map<std::string, int> method_rank;
    double ly = mt + 8;
    for (const auto& fam : families) {
        const int mi = method_rank[meta2[fam].first]++;
        const double x = fam_x[fam].first / fam_x[fam].second;
        const double y = fam_y[fam].first / fam_y[fam].second;
        const char* color = family_color(fam, mi);
        svg.circle(px(x), py(y), 5, color);
        svg.circle(ml + plot + 16, ly - 4, 5, color);
        svg.text(ml + plot + 26, ly, fam + " (" + fmt("%.3f", euclidean_score(x, y)) + ")", 11);
        ly += 18;
    }
    svg.text(ml, 18, "retention (probe) vs adaptation (finetune)", 13);
    svg.text(ml + plot / 2, mt + plot + 34, "pretrain-task probe accuracy", 12, "middle");
    write_file_atomic(path, svg.finish());
}

} // namespace ppap
