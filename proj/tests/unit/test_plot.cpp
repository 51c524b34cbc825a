#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "dibjscc/plot.hpp"

using namespace dibjscc;

namespace {

std::size_t count_occurrences(const std::string& hay,
                              const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t at = hay.find(needle); at != std::string::npos;
       at = hay.find(needle, at + needle.size())) {
    ++n;
  }
  return n;
}

PlotSpec demo_spec() {
  PlotSpec spec;
  spec.title = "eavesdropping accuracy";
  spec.x_label = "snr (dB)";
  spec.y_label = "accuracy";
  spec.footnote = "config deadbeef | v1.0.0";
  return spec;
}

}  // namespace

TEST_CASE("chart draws one curve per series", "[plot]") {
  std::vector<Series> series = {
      {"split", {{-5, 0.1}, {5, 0.11}, {15, 0.12}}},
      {"adversarial", {{-5, 0.12}, {5, 0.4}, {15, 0.86}}},
      {"noise floor", {{-5, 0.1}, {5, 0.1}, {15, 0.1}}},
  };
  std::string svg = render_line_chart_svg(demo_spec(), series);
  CHECK(count_occurrences(svg, "<polyline") == 3);
  CHECK(count_occurrences(svg, "<circle") == 9);
  CHECK(svg.find(">split<") != std::string::npos);
  CHECK(svg.find(">adversarial<") != std::string::npos);
  CHECK(svg.find(">eavesdropping accuracy<") != std::string::npos);
  CHECK(svg.find("config deadbeef | v1.0.0") != std::string::npos);
  CHECK(svg.rfind("</svg>\n") == svg.size() - 7);

  // Deterministic markup: rendering twice gives identical bytes.
  CHECK(render_line_chart_svg(demo_spec(), series) == svg);
}

TEST_CASE("chart orders points by x and escapes markup", "[plot]") {
  // Same curve fed in scrambled order must produce the same polyline.
  std::vector<Series> sorted = {{"a<b", {{-5, 0.2}, {0, 0.5}, {10, 0.9}}}};
  std::vector<Series> scrambled = {{"a<b", {{10, 0.9}, {-5, 0.2}, {0, 0.5}}}};
  std::string a = render_line_chart_svg(demo_spec(), sorted);
  CHECK(render_line_chart_svg(demo_spec(), scrambled) == a);
  CHECK(a.find("a<b") == std::string::npos);
  CHECK(a.find("a&lt;b") != std::string::npos);
}

TEST_CASE("degenerate and invalid plot inputs", "[plot]") {
  REQUIRE_THROWS_AS(render_line_chart_svg(demo_spec(), {}), input_error);
  REQUIRE_THROWS_AS(render_line_chart_svg(demo_spec(), {{"empty", {}}}),
                    input_error);
  REQUIRE_THROWS_AS(
      render_line_chart_svg(demo_spec(),
                            {{"nan", {{0.0, std::nan("")}}}}),
      input_error);

  // A single point still renders: range is padded instead of dividing by 0.
  std::string svg =
      render_line_chart_svg(demo_spec(), {{"dot", {{7.0, 0.5}}}});
  CHECK(count_occurrences(svg, "<circle") == 1);
  CHECK(svg.find("nan") == std::string::npos);
}
