// Throughput report: entropy decode MB/s and end-to-end frames/s.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "throughput.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mnvc throughput bench"};
  int width = 1280, height = 768;
  std::size_t frames = 2, partitions = 8;
  std::string weights, config;
  std::uint64_t seed = 1;
  unsigned workers = mnvc::default_workers();
  app.add_option("--width", width, "Frame width");
  app.add_option("--height", height, "Frame height");
  app.add_option("--frames", frames, "Frames for the end-to-end run (first is intra)");
  app.add_option("--partitions", partitions, "Entropy partitions");
  app.add_option("--weights", weights, "Weights file (default: generated from --config/--seed)");
  app.add_option("--config", config, "Config JSON (default: built-in)");
  app.add_option("--seed", seed, "Weight seed");
  app.add_option("--workers", workers, "Worker threads (default: NVC_WORKERS or hardware)");
  CLI11_PARSE(app, argc, argv);

  try {
    using namespace mnvc;
    const ModelWeights w = !weights.empty() ? load_weights(weights)
                                            : generate_weights(config.empty() ? CodecConfig::default_config()
                                                                              : load_config(config),
                                                               seed);
    const int latent = w.config.intra_latent_channels();
    std::printf("resolution\t%dx%d\nworkers\t%u\npartitions\t%zu\n", width, height, workers, partitions);
    const auto e = bench::entropy_decode(height, width, latent, partitions, workers);
    std::printf("entropy_symbols\t%zu\nentropy_payload_bytes\t%zu\nentropy_decode_MB_per_s\t%.2f\n"
                "entropy_decode_Msym_per_s\t%.2f\n",
                e.symbols, e.payload_bytes, e.mb_per_s(), e.msym_per_s());
    std::fflush(stdout);
    const auto c = bench::end_to_end(w, height, width, frames, workers);
    std::printf("frames\t%zu\nencode_fps\t%.3f\ndecode_fps\t%.3f\nstream_bytes\t%zu\n", c.frames, c.encode_fps(),
                c.decode_fps(), c.stream_bytes);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "mnvc_bench: %s\n", err.what());
    return 1;
  }
  return 0;
}
