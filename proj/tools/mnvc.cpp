// mnvc: encode, decode, metrics, report, gen-weights.

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "mnvc/mnvc.hpp"

namespace {

using namespace mnvc;

// Exit status per failure class; 1 is reserved for anything unexpected,
// and CLI11 uses its own codes for usage errors.
int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return 10;
    case ErrorKind::Shape: return 11;
    case ErrorKind::Domain: return 12;
    case ErrorKind::Truncated: return 13;
    case ErrorKind::Corrupt: return 14;
    case ErrorKind::Parse: return 15;
    case ErrorKind::Format: return 16;
    case ErrorKind::Validation: return 17;
    case ErrorKind::Desync: return 18;
    case ErrorKind::Io: return 19;
  }
  return 1;
}

void write_bytes(const std::string& path, std::span<const std::uint8_t> b) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!f) fail(ErrorKind::Io, "write failed: " + path);
}

struct EncodeArgs {
  std::string input, weights, output;
  int width = 0, height = 0;
  std::size_t gop = 0, partitions = 0;
};

void run_encode(const EncodeArgs& a) {
  const ModelWeights w = load_weights(a.weights);
  const RawVideo v = load_video(a.input, a.width, a.height);
  EncodeOptions opt;
  opt.gop = a.gop;
  opt.partitions = a.partitions;
  const EncodedVideo e = encode_video(v, w, opt);
  write_bytes(a.output, e.stream);
  std::printf("frames\t%zu\nbytes\t%zu\nbpp\t%.4f\n", v.frames.size(), e.stream.size(),
              bits_per_pixel(e.stream.size(), v.width, v.height, v.frames.size()));
}

struct DecodeArgs {
  std::string input, weights, output;
  bool time = false;
};

void run_decode(const DecodeArgs& a) {
  const ModelWeights w = load_weights(a.weights);
  const auto bytes = read_file(a.input);
  const DecodedVideo d = decode_video(bytes, w);
  save_video(a.output, d.video);
  if (d.trailing_garbage) std::fprintf(stderr, "warning: sub-stream bytes past the end of coded data were ignored\n");
  std::printf("frames\t%zu\n", d.video.frames.size());
  if (a.time) {
    const TimingStats t = timing_stats(d.frame_ms);
    std::printf("time_mean_ms\t%.2f\ntime_p95_ms\t%.2f\n", t.mean_ms, t.p95_ms);
  }
}

struct MetricsArgs {
  std::string ref, test, stream, weights;
  int width = 0, height = 0;
  double time_ms = std::nan("");
};

void run_metrics(const MetricsArgs& a) {
  const RawVideo ref = load_video(a.ref, a.width, a.height);
  const RawVideo test = load_video(a.test, ref.width, ref.height);
  const VideoQuality q = video_quality(ref, test);
  MetricsRow row;
  row.ms_ssim = q.ms_ssim;
  row.psnr = q.psnr;
  row.frames = ref.frames.size();
  row.bpp = std::nan("");
  row.time_ms = a.time_ms;
  if (!a.stream.empty()) {
    const auto bytes = read_file(a.stream);
    ByteReader r(bytes, "stream header");
    const ContainerHeader h = read_header(r);
    if (h.display_width != ref.width || h.display_height != ref.height || h.frame_count != ref.frames.size())
      fail(ErrorKind::Validation, "stream does not describe the reference video");
    row.bpp = bits_per_pixel(bytes.size(), h.display_width, h.display_height, h.frame_count);
    if (!a.weights.empty() && std::isnan(row.time_ms)) {
      const DecodedVideo d = decode_video(bytes, load_weights(a.weights));
      row.time_ms = timing_stats(d.frame_ms).mean_ms;
    }
  }
  std::printf("%s\n%s\n", MetricsRow::tsv_header().c_str(), row.tsv().c_str());
}

void run_report(const std::string& config) {
  const CodecConfig cfg = load_config(config);
  std::fputs(format_complexity_table(count_complexity(cfg)).c_str(), stdout);
}

void run_gen_weights(const std::string& config, std::uint64_t seed, const std::string& output) {
  const CodecConfig cfg = config.empty() ? CodecConfig::default_config() : load_config(config);
  const ModelWeights w = generate_weights(cfg, seed);
  save_weights(w, output);
  std::printf("checksum\t%016llx\n", static_cast<unsigned long long>(weights_checksum(w)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"int8 neural video codec"};
  app.require_subcommand(1);

  EncodeArgs enc;
  auto* e = app.add_subcommand("encode", "Encode frames into a stream");
  e->add_option("--input", enc.input, "PPM file, directory of PPM files, or raw RGB24 file")->required();
  e->add_option("--width", enc.width, "Frame width (raw RGB24 input)");
  e->add_option("--height", enc.height, "Frame height (raw RGB24 input)");
  e->add_option("--weights", enc.weights, "Weights file")->required();
  e->add_option("--gop", enc.gop, "GoP length (default: from weights)");
  e->add_option("--partitions", enc.partitions, "Entropy partitions per sub-stream (default: from weights)");
  e->add_option("--output", enc.output, "Output stream")->required();

  DecodeArgs dec;
  auto* d = app.add_subcommand("decode", "Decode a stream into frames");
  d->add_option("--input", dec.input, "Stream file")->required();
  d->add_option("--weights", dec.weights, "Weights file")->required();
  d->add_option("--output", dec.output, "PPM file, directory (trailing '/'), or raw RGB24 file")->required();
  d->add_flag("--time", dec.time, "Report per-frame reconstruction time (mean and p95, ms)");

  MetricsArgs met;
  auto* m = app.add_subcommand("metrics", "Compare two videos (TSV: MSSSIM PSNR BPP Frames Time)");
  m->add_option("--ref", met.ref, "Reference video")->required();
  m->add_option("--test", met.test, "Test video")->required();
  m->add_option("--width", met.width, "Frame width (raw RGB24 input)");
  m->add_option("--height", met.height, "Frame height (raw RGB24 input)");
  m->add_option("--stream", met.stream, "Stream file for the BPP column");
  m->add_option("--weights", met.weights, "Weights file; with --stream, times a decode for the Time column");
  m->add_option("--time-ms", met.time_ms, "Time column value in ms");

  std::string report_cfg;
  auto* r = app.add_subcommand("report", "Parameter and MAC table for a config");
  r->add_option("--config", report_cfg, "Config JSON")->required();

  std::string gw_cfg, gw_out;
  std::uint64_t gw_seed = 0;
  auto* g = app.add_subcommand("gen-weights", "Generate deterministic calibrated weights");
  g->add_option("--config", gw_cfg, "Config JSON (default: built-in config)");
  g->add_option("--seed", gw_seed, "RNG seed")->required();
  g->add_option("--output", gw_out, "Weights file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*e) run_encode(enc);
    else if (*d) run_decode(dec);
    else if (*m) run_metrics(met);
    else if (*r) run_report(report_cfg);
    else if (*g) run_gen_weights(gw_cfg, gw_seed, gw_out);
  } catch (const Error& err) {
    std::fprintf(stderr, "mnvc: %s\n", err.what());
    return exit_code(err.kind());
  } catch (const std::exception& err) {
    std::fprintf(stderr, "mnvc: %s\n", err.what());
    return 1;
  }
  return 0;
}
