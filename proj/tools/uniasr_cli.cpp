#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uniasr/uniasr.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uniasr;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::ofstream open_out(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
  return os;
}

void write_text(const std::string& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Command, configuration, library version and content hashes of inputs and outputs.
void write_manifest(const std::string& path, const std::string& command, const json& config,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["config"] = config;
  const auto hashes = [](const std::vector<std::string>& files) {
    json arr = json::array();
    for (const auto& f : files) arr.push_back({{"path", f}, {"fnv1a64", hex64(fnv1a64(read_file(f)))}});
    return arr;
  };
  m["inputs"] = hashes(inputs);
  m["outputs"] = hashes(outputs);
  write_text(path, m.dump(2) + "\n");
}

std::vector<Utterance> load_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot read corpus " + path);
  return read_corpus(is);
}

std::size_t corpus_vocab(const std::vector<Utterance>& corpus, std::size_t floor) {
  std::size_t v = floor;
  for (const auto& u : corpus)
    for (auto t : u.tokens) v = std::max(v, static_cast<std::size_t>(t) + 1);
  return v;
}

Paradigm parse_paradigm(const std::string& s) {
  if (s == "NS" || s == "ns") return Paradigm::NS;
  if (s == "SS" || s == "ss") return Paradigm::SS;
  if (s == "CS" || s == "cs") return Paradigm::CS;
  throw Error(ErrorCode::InvalidArgument, "unknown paradigm '" + s + "'");
}

struct ModelOptions {
  std::string spec = "boundary";  // boundary | teacher | toy | path to a saved toy model
  std::size_t window = 1;
  std::uint64_t seed = 1;
  std::string save_path;

  json to_json() const { return {{"model", spec}, {"confusion_window", window}, {"model_seed", seed}}; }
};

/// Resolves --model into a per-utterance provider for the given chunking.
ModelProvider make_provider(const ModelOptions& opt, const std::vector<Utterance>& corpus, const ChunkingConfig& layout,
                            std::vector<std::string>& inputs) {
  const auto vocab = corpus_vocab(corpus, 64);
  if (opt.spec == "boundary") {
    BoundaryOracleFactory f{opt.window, vocab, layout, {}, {}};
    return [f](const Utterance& u, Paradigm p) { return f(u, p); };
  }
  if (opt.spec == "teacher") {
    return [vocab, layout](const Utterance& u, Paradigm p) -> std::shared_ptr<const LanguageModel> {
      return std::make_shared<TeacherOracle>(build_sequence(p, u, layout), vocab);
    };
  }
  std::shared_ptr<const ToyTransformer> model;
  if (opt.spec == "toy") {
    ModelConfig cfg;
    cfg.vocab_size = vocab;
    cfg.frame_dim = corpus.empty() ? cfg.frame_dim : corpus.front().frames.cols;
    cfg.seed = opt.seed;
    model = std::make_shared<ToyTransformer>(cfg);
  } else {
    model = std::make_shared<ToyTransformer>(ToyTransformer::load(opt.spec));
    inputs.push_back(opt.spec);
  }
  if (!opt.save_path.empty()) model->save(opt.save_path);
  return shared_model(model);
}

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--model", m.spec, "boundary, teacher, toy, or a saved toy model file")->capture_default_str();
  cmd->add_option("--confusion-window", m.window, "boundary oracle window F in frames")->capture_default_str();
  cmd->add_option("--model-seed", m.seed, "seed for --model toy")->capture_default_str();
  cmd->add_option("--save-model", m.save_path, "write the toy model parameters to this file");
}

struct CorpusOptions {
  CorpusConfig cfg;
  bool lazy = false;
};

void add_corpus_options(CLI::App* cmd, CorpusOptions& c) {
  auto& cfg = c.cfg;
  cmd->add_option("--num-utterances", cfg.num_utterances)->capture_default_str();
  cmd->add_option("--vocab-size", cfg.vocab_size)->capture_default_str();
  cmd->add_option("--frame-dim", cfg.frame_dim)->capture_default_str();
  cmd->add_option("--min-tokens", cfg.min_tokens)->capture_default_str();
  cmd->add_option("--max-tokens", cfg.max_tokens)->capture_default_str();
  cmd->add_option("--frames-per-token-mean", cfg.frames_per_token_mean)->capture_default_str();
  cmd->add_option("--min-frames-per-token", cfg.min_frames_per_token)->capture_default_str();
  cmd->add_option("--max-frames-per-token", cfg.max_frames_per_token)->capture_default_str();
  cmd->add_option("--max-edge-silence", cfg.max_edge_silence)->capture_default_str();
  cmd->add_option("--noise-std", cfg.noise_std)->capture_default_str();
}

json corpus_config_json(const CorpusConfig& c) {
  return {{"num_utterances", c.num_utterances},
          {"vocab_size", c.vocab_size},
          {"frame_dim", c.frame_dim},
          {"frames_per_second", c.frames_per_second},
          {"min_tokens", c.min_tokens},
          {"max_tokens", c.max_tokens},
          {"frames_per_token_mean", c.frames_per_token_mean},
          {"min_frames_per_token", c.min_frames_per_token},
          {"max_frames_per_token", c.max_frames_per_token},
          {"max_edge_silence", c.max_edge_silence},
          {"noise_std", c.noise_std},
          {"seed", c.seed}};
}

/// "name=path" or "path" (named after the file stem).
std::pair<std::string, std::string> split_named(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos) return {fs::path(arg).stem().string(), arg};
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

int run_gen_corpus(const CorpusOptions& opt, const std::string& out) {
  const auto corpus = gen_synthetic_corpus(opt.cfg);
  {
    auto os = open_out(out);
    for (std::size_t i = 0; i < corpus.size(); ++i)
      os << (opt.lazy ? to_json_lazy(corpus[i], opt.cfg, i) : to_json(corpus[i])).dump() << "\n";
  }
  auto cfg = corpus_config_json(opt.cfg);
  cfg["lazy_frames"] = opt.lazy;
  write_manifest(out + ".manifest.json", "gen-corpus", cfg, {}, {out});
  std::cout << "wrote " << corpus.size() << " utterances to " << out << "\n";
  return 0;
}

int run_build_sequences(const std::string& corpus_path, const std::string& paradigm, double chunk_ms, double fps,
                        std::size_t ratio, const std::string& out) {
  const auto corpus = load_corpus(corpus_path);
  const ChunkingConfig layout{chunk_ms_to_frames(chunk_ms, fps), ratio};
  layout.validate();
  std::vector<Paradigm> paradigms;
  if (paradigm == "all")
    paradigms = {Paradigm::NS, Paradigm::SS, Paradigm::CS};
  else
    paradigms = {parse_paradigm(paradigm)};
  std::size_t records = 0;
  {
    auto os = open_out(out);
    for (const auto& u : corpus)
      for (auto p : paradigms) {
        os << to_json(build_sequence(p, u, layout), u.id).dump() << "\n";
        ++records;
      }
  }
  write_manifest(out + ".manifest.json", "build-sequences",
                 {{"paradigm", paradigm}, {"chunk_ms", chunk_ms}, {"fps", fps}, {"chunk_frames", layout.chunk_frames},
                  {"speech_text_ratio", ratio}},
                 {corpus_path}, {out});
  std::cout << "wrote " << records << " sequences to " << out << "\n";
  return 0;
}

int run_decode(const std::string& corpus_path, std::string strategy_name, std::size_t beam_width, double chunk_ms,
               double fps, std::size_t threads, ModelOptions model, const std::string& out) {
  const auto corpus = load_corpus(corpus_path);
  const ChunkingConfig layout{chunk_ms_to_frames(chunk_ms, fps), 2};
  if (beam_width > 1 && strategy_name == "beam") strategy_name = "beam" + std::to_string(beam_width);
  if (beam_width > 1 && strategy_name == "beam-fallback") strategy_name = "beam" + std::to_string(beam_width) + "-fallback";
  const auto strategy = parse_strategy(strategy_name, layout.chunk_frames);
  std::vector<std::string> inputs{corpus_path};
  const auto provider = make_provider(model, corpus, layout, inputs);
  const auto results = decode_corpus(corpus, provider, strategy, layout, fps, {}, threads);
  {
    auto os = open_out(out);
    for (const auto& r : results) os << to_json(r).dump() << "\n";
  }
  const auto t = totals(results);
  auto cfg = model.to_json();
  cfg.update({{"strategy", strategy.name()}, {"chunk_ms", chunk_ms}, {"fps", fps}, {"chunk_frames", layout.chunk_frames}});
  write_manifest(out + ".manifest.json", "decode", cfg, inputs, {out});
  std::cout << strategy.name() << " N=" << layout.chunk_frames << ": WER "
            << format_fixed(t.errors.ref_len ? 100.0 * t.errors.wer() : 0.0) << "% over " << t.errors.ref_len
            << " tokens, forward positions " << t.stats.forward_positions << "\n";
  return 0;
}

struct AblateOptions {
  std::vector<std::string> corpora;
  std::vector<double> chunk_ms{1000, 640, 320};
  std::vector<std::string> strategies = default_strategy_order();
  double fps = 25.0;
  std::size_t threads = 0;
  std::uint64_t seed = 7;
  std::string out_dir = "ablation";
};

int run_ablate(const AblateOptions& opt, ModelOptions model) {
  std::vector<std::pair<std::string, std::vector<Utterance>>> sets;
  std::vector<std::string> inputs;
  if (opt.corpora.empty()) {
    CorpusConfig cfg;
    cfg.seed = opt.seed;
    sets.emplace_back("synthetic", gen_synthetic_corpus(cfg));
  }
  for (const auto& arg : opt.corpora) {
    auto [name, path] = split_named(arg);
    sets.emplace_back(name, load_corpus(path));
    inputs.push_back(path);
  }

  std::vector<UtteranceResult> rows;
  json compute = json::array();
  std::string latency_csv = "chunk_ms,strategy,set,mean_emission_ms,mean_finalization_ms,max_spike_ms\n";
  std::string compute_csv =
      "chunk_ms,strategy,set,forward_positions,cache_reused_positions,rollback_count,rollback_positions,turns\n";
  for (double ms : opt.chunk_ms) {
    if (!(ms > 0)) throw Error(ErrorCode::InvalidArgument, "chunk_ms values must be positive");
    const ChunkingConfig layout{chunk_ms_to_frames(ms, opt.fps), 2};
    for (const auto& name : opt.strategies) {
      const auto strategy = parse_strategy(name, layout.chunk_frames);
      for (const auto& [set, corpus] : sets) {
        std::vector<std::string> model_inputs;
        const auto provider = make_provider(model, corpus, layout, model_inputs);
        const auto results = decode_corpus(corpus, provider, strategy, layout, opt.fps, {}, opt.threads);
        for (const auto& r : results) rows.push_back({set, ms, strategy.name(), r.id, r.errors});
        const auto t = totals(results);
        const auto prefix = format_fixed(ms, 0) + "," + strategy.name() + "," + set + ",";
        latency_csv += prefix + format_fixed(t.mean_emission_ms, 3) + "," + format_fixed(t.mean_finalization_ms, 3) +
                       "," + format_fixed(t.max_spike_ms, 3) + "\n";
        compute_csv += prefix + std::to_string(t.stats.forward_positions) + "," +
                       std::to_string(t.stats.cache_reused_positions) + "," + std::to_string(t.stats.rollback_count) +
                       "," + std::to_string(t.stats.rollback_positions) + "," + std::to_string(t.stats.turns) + "\n";
        compute.push_back({{"chunk_ms", ms},
                           {"chunk_frames", layout.chunk_frames},
                           {"strategy", strategy.name()},
                           {"set", set},
                           {"errors", to_json(t.errors)},
                           {"stats", to_json(t.stats)},
                           {"latency",
                            {{"mean_emission_ms", t.mean_emission_ms},
                             {"mean_finalization_ms", t.mean_finalization_ms},
                             {"max_spike_ms", t.max_spike_ms}}}});
      }
    }
  }
  const auto report = summarize(rows, opt.strategies);
  const auto dir = fs::path(opt.out_dir);
  const auto path = [&](const char* f) { return (dir / f).string(); };
  write_text(path("table.md"), render_markdown(report));
  write_text(path("table.csv"), render_csv(report));
  write_text(path("latency.csv"), latency_csv);
  write_text(path("compute.csv"), compute_csv);
  json summary;
  summary["sets"] = report.sets;
  auto& js_rows = summary["rows"] = json::array();
  for (const auto& r : report.rows)
    js_rows.push_back({{"chunk_ms", r.chunk_ms},
                       {"strategy", r.strategy},
                       {"wer_percent", r.wer_percent},
                       {"avg_percent", r.avg_percent},
                       {"compact", format_compact(r, report.sets)}});
  summary["runs"] = compute;
  write_text(path("summary.json"), summary.dump(2) + "\n");

  auto cfg = model.to_json();
  cfg.update({{"chunk_ms", opt.chunk_ms}, {"strategies", opt.strategies}, {"fps", opt.fps}, {"seed", opt.seed}});
  write_manifest(path("manifest.json"), "ablate", cfg, inputs,
                 {path("table.md"), path("table.csv"), path("latency.csv"), path("compute.csv"), path("summary.json")});
  std::cout << render_markdown(report);
  return 0;
}

int run_verify_cmd(const VerifyOptions& opt) {
  const auto results = run_verify(opt);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) std::cout << ": " << r.detail;
    std::cout << "\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified streaming ASR sequence layouts and decoding engine"};
  app.set_config("--config", "", "read options from a key = value file");
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  double fps = 25.0;
  std::size_t threads = 0;

  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus as JSON Lines");
  CorpusOptions corpus_opt;
  std::string gen_out = "corpus.jsonl";
  add_corpus_options(gen, corpus_opt);
  gen->add_option("--fps", corpus_opt.cfg.frames_per_second)->capture_default_str();
  gen->add_option("--seed", corpus_opt.cfg.seed)->capture_default_str();
  gen->add_flag("--lazy-frames", corpus_opt.lazy, "store frame seeds instead of frames");
  gen->add_option("--out", gen_out)->capture_default_str();

  auto* build = app.add_subcommand("build-sequences", "export NS/SS/CS training layouts");
  std::string build_corpus, build_out = "sequences.jsonl", paradigm = "all";
  double build_ms = 1000;
  std::size_t ratio = 2;
  build->add_option("--corpus", build_corpus)->required();
  build->add_option("--paradigm", paradigm, "NS, SS, CS or all")->capture_default_str();
  build->add_option("--chunk-ms", build_ms)->capture_default_str()->check(CLI::PositiveNumber);
  build->add_option("--fps", fps)->capture_default_str()->check(CLI::PositiveNumber);
  build->add_option("--ratio", ratio, "speech:text ratio r")->capture_default_str();
  build->add_option("--out", build_out)->capture_default_str();

  auto* decode = app.add_subcommand("decode", "stream-decode a corpus");
  std::string decode_corpus_path, strategy = "greedy", decode_out = "decode.jsonl";
  std::size_t beam_width = 1;
  double decode_ms = 1000;
  ModelOptions decode_model;
  decode->add_option("--corpus", decode_corpus_path)->required();
  decode->add_option("--strategy", strategy,
                     "greedy, greedy-fallback, beamW, beamW-fallback, hold-N, local-agreement, wait-K")
      ->capture_default_str();
  decode->add_option("--beam-width", beam_width, "width for --strategy beam / beam-fallback")->capture_default_str();
  decode->add_option("--chunk-ms", decode_ms)->capture_default_str()->check(CLI::PositiveNumber);
  decode->add_option("--fps", fps)->capture_default_str()->check(CLI::PositiveNumber);
  decode->add_option("--threads", threads)->capture_default_str();
  decode->add_option("--out", decode_out)->capture_default_str();
  add_model_options(decode, decode_model);

  auto* ablate = app.add_subcommand("ablate", "sweep chunk lengths and decoding strategies");
  AblateOptions ablate_opt;
  ModelOptions ablate_model;
  ablate->add_option("--corpus", ablate_opt.corpora, "[name=]path, repeatable; default: generated corpus");
  ablate->add_option("--chunk-ms", ablate_opt.chunk_ms)->capture_default_str()->delimiter(',');
  ablate->add_option("--strategies", ablate_opt.strategies)->capture_default_str()->delimiter(',');
  ablate->add_option("--fps", ablate_opt.fps)->capture_default_str()->check(CLI::PositiveNumber);
  ablate->add_option("--seed", ablate_opt.seed)->capture_default_str();
  ablate->add_option("--threads", ablate_opt.threads)->capture_default_str();
  ablate->add_option("--out-dir", ablate_opt.out_dir)->capture_default_str();
  add_model_options(ablate, ablate_model);

  auto* verify = app.add_subcommand("verify", "run the invariant suites");
  VerifyOptions verify_opt;
  verify->add_option("--utterances", verify_opt.utterances)->capture_default_str();
  verify->add_option("--model-trials", verify_opt.model_trials)->capture_default_str();
  verify->add_option("--seed", verify_opt.seed)->capture_default_str();
  verify->add_flag("--inject-cache-fault", verify_opt.inject_cache_fault, "corrupt a sealed cache row on purpose");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      corpus_opt.cfg.validate();
      return run_gen_corpus(corpus_opt, gen_out);
    }
    if (*build) return run_build_sequences(build_corpus, paradigm, build_ms, fps, ratio, build_out);
    if (*decode) return run_decode(decode_corpus_path, strategy, beam_width, decode_ms, fps, threads, decode_model, decode_out);
    if (*ablate) return run_ablate(ablate_opt, ablate_model);
    if (*verify) return run_verify_cmd(verify_opt);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidArgument ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
