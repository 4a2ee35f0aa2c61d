// Writes a procedural training image (PNG for 2D, SGRD otherwise).
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "texsyn/error.hpp"
#include "texsyn/grid.hpp"
#include "texsyn/metrics.hpp"
#include "texsyn/procedural.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Procedural binary training images"};
  std::string kind = "channel", out;
  std::vector<int> dims{64, 64};
  std::uint64_t seed = 7;
  double porosity = 0.28;
  app.add_option("--kind", kind, "channel or bernoulli")->check(CLI::IsMember({"channel", "bernoulli"}));
  app.add_option("--dims", dims, "grid dimensions")->expected(2, 3);
  app.add_option("--seed", seed);
  app.add_option("--porosity", porosity, "target foreground fraction");
  app.add_option("--out", out, "output file (.png or .sgrd)")->required();
  CLI11_PARSE(app, argc, argv);
  try {
    texsyn::TextureGrid g;
    if (kind == "channel") {
      if (dims.size() != 2) throw texsyn::Error("channel images are 2D");
      texsyn::ChannelParams p;
      p.porosity = porosity;
      g = texsyn::channel_ti(dims, seed, p);
    } else {
      g = texsyn::bernoulli_grid(dims, porosity, seed);
    }
    texsyn::save_texture(g, out);
    std::printf("%s: porosity %.4f\n", out.c_str(), texsyn::porosity(g));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
