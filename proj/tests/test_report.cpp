#include <doctest.h>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppap/fsio.hpp"
#include "ppap/report.hpp"

using namespace ppap;

namespace {

std::filesystem::path tmp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

CsvRow row(const char* method, double strength, const char* task, const char* stage, double acc,
           double euc = -1.0, std::uint64_t seed = 0) {
    CsvRow r;
    r.run_id = "rid";
    r.method = method;
    r.strength = strength;
    r.task_id = task;
    r.stage = stage;
    r.accuracy = acc;
    r.euclidean = euc;
    r.seed = seed;
    r.wall_seconds = 0.0;
    return r;
}

} // namespace

TEST_SUITE("report") {

TEST_CASE("csv lines pin their field formats") {
    CsvRow r = row("si", 5e-05, "t0", "after_t0", 0.8025, -1.0, 7);
    r.wall_seconds = 1.23456;
    CHECK(csv_line(r) == "rid,si,5e-05,t0,after_t0,0.802500,,7,1.235");

    CsvRow e = row("ppap", 0.1, "ft-hold3", "probe", 0.803, 1.137, 42);
    CHECK(csv_line(e) == "rid,ppap,0.1,ft-hold3,probe,0.803000,1.137000,42,0.000");

    CsvRow z = row("none", 0.0, "t", "s", 0.0);
    CHECK(csv_line(z) == "rid,none,0,t,s,0.000000,,0,0.000");
}

TEST_CASE("csv write-read-write is byte stable") {
    std::vector<CsvRow> rows = {
        row("none", 0.0, "task0", "after_task1", 0.91, -1.0, 3),
        row("ppap", 0.05, "ft-hold0", "probe", 0.7725, 1.0912, 4),
        row("ewc", 500.0, "pre-hold0", "degraded", 0.3333333, -1.0, 5),
    };
    const auto p1 = tmp_path("ppap-test-a.csv");
    const auto p2 = tmp_path("ppap-test-b.csv");
    write_csv(p1.string(), rows);
    const auto back = read_csv(p1.string());
    REQUIRE(back.size() == 3);
    CHECK(back[0].run_id == "rid");
    CHECK(back[0].method == "none");
    CHECK(back[0].euclidean == -1.0); // empty field
    CHECK(back[1].strength == 0.05);
    CHECK(back[1].euclidean == doctest::Approx(1.0912).epsilon(1e-9));
    CHECK(back[2].seed == 5);
    write_csv(p2.string(), back);
    CHECK(read_file(p1.string()) == read_file(p2.string()));
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("csv reader tolerates crlf and blank lines") {
    const auto path = tmp_path("ppap-test-crlf.csv");
    std::string text = std::string(kCsvHeader) + "\r\n";
    text += "r,none,0,t0,s,0.500000,,1,0.000\r\n\r\n";
    text += "r,ppap,0.1,t1,s,0.250000,0.559017,2,0.000"; // no trailing newline
    write_file_atomic(path.string(), text);
    const auto rows = read_csv(path.string());
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].accuracy == 0.5);
    CHECK(rows[1].euclidean == doctest::Approx(0.559017));
    std::filesystem::remove(path);
}

TEST_CASE("csv reader rejects schema drift") {
    const auto path = tmp_path("ppap-test-bad.csv");
    write_file_atomic(path.string(), "run,method\nx,y\n");
    CHECK_THROWS_WITH_AS(read_csv(path.string()), doctest::Contains("bad or missing header"),
                         std::runtime_error);

    write_file_atomic(path.string(), std::string(kCsvHeader) + "\nonly,three,fields\n");
    CHECK_THROWS_WITH_AS(read_csv(path.string()), doctest::Contains("expected 9"), std::runtime_error);

    write_file_atomic(path.string(), std::string(kCsvHeader) + "\nr,none,0,t,s,not-a-number,,1,0\n");
    CHECK_THROWS_WITH_AS(read_csv(path.string()), doctest::Contains("bad accuracy value"),
                         std::runtime_error);

    write_file_atomic(path.string(), "");
    CHECK_THROWS_AS(read_csv(path.string()), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("bar chart renders one family per method-strength") {
    std::vector<CsvRow> rows;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        for (const char* task : {"task0", "task1"}) {
            rows.push_back(row("none", 0.0, task, "after_task1", 0.5 + 0.1 * seed, -1.0, seed));
            rows.push_back(row("ppap", 0.1, task, "after_task1", 0.7, -1.0, seed));
            rows.push_back(row("si", 0.05, task, "after_task1", 0.6, -1.0, seed));
        }
    }
    const auto path = tmp_path("ppap-test-bars.svg");
    write_bar_chart(path.string(), rows);
    const std::string svg = read_file(path.string());
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("ppap r=0.1") != std::string::npos);
    CHECK(svg.find("si c=0.05") != std::string::npos);
    CHECK(svg.find("none") != std::string::npos);
    CHECK(svg.find("task0") != std::string::npos);
    CHECK(svg.find("task1") != std::string::npos);
    CHECK_THROWS_WITH_AS(write_bar_chart(path.string(), {}), doctest::Contains("at least one row"),
                         std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("scatter chart pairs probe with finetune accuracy") {
    std::vector<CsvRow> rows;
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
        for (int hold = 0; hold < 2; ++hold) {
            const std::string pre = "pre-hold" + std::to_string(hold);
            const std::string ft = "ft-hold" + std::to_string(hold);
            auto add = [&](const char* m, double s, double probe, double ftacc, double deg) {
                rows.push_back(row(m, s, pre.c_str(), "pretrain_end", 0.82, -1.0, seed));
                rows.push_back(row(m, s, ft.c_str(), "finetune_end", ftacc, -1.0, seed));
                rows.push_back(row(m, s, pre.c_str(), "degraded", deg, -1.0, seed));
                rows.push_back(row(m, s, pre.c_str(), "probe", probe, euclidean_score(probe, ftacc), seed));
            };
            add("none", 0.0, 0.55, 0.86, 0.08);
            add("ppap", 0.1, 0.78, 0.83, 0.30);
            add("ewc", 100.0, 0.70, 0.75, 0.40);
        }
    }
    const auto path = tmp_path("ppap-test-scatter.svg");
    write_scatter_chart(path.string(), rows);
    const std::string svg = read_file(path.string());
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("ppap r=0.1") != std::string::npos);
    CHECK(svg.find("ewc") != std::string::npos);
    CHECK(svg.find("stroke-dasharray") != std::string::npos); // reference lines present
    CHECK(svg.find("retention (probe) vs adaptation (finetune)") != std::string::npos);

    CHECK_THROWS_AS(write_scatter_chart(path.string(), {}), std::runtime_error);
    // rows without probe/finetune pairs cannot be plotted
    std::vector<CsvRow> only_pre = {row("none", 0.0, "pre-hold0", "pretrain_end", 0.8)};
    CHECK_THROWS_WITH_AS(write_scatter_chart(path.string(), only_pre),
                         doctest::Contains("needs probe and finetune_end"), std::runtime_error);
    std::filesystem::remove(path);
}

} // TEST_SUITE
