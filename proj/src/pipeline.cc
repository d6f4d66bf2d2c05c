#include "rilm/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>

#include "rilm/checkpoint.hpp"
#include "rilm/corpus.hpp"
#include "rilm/domain_adapt.hpp"
#include "rilm/error.hpp"
#include "rilm/tokenizer.hpp"

namespace fs = std::filesystem;

namespace rilm::pipeline {

namespace {

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error("io: missing " + what + " path");
  if (!fs::is_regular_file(path)) throw Error("io: " + what + " '" + path + "' does not exist");
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_log(const std::string& output, const std::string& stage, const RunConfig& cfg,
               const std::vector<std::pair<std::string, std::string>>& inputs,
               const std::vector<double>& epoch_loss = {}) {
  std::ofstream os(output + ".log", std::ios::binary);
  if (!os) throw Error("io: cannot write '" + output + ".log'");
  os << "stage=" << stage << "\n";
  for (const auto& [k, v] : inputs) os << "input." << k << "=" << v << "\n";
  os << cfg.dump();
  char buf[64];
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.6f", epoch_loss[e]);
    os << "epoch." << e + 1 << ".loss=" << buf << "\n";
  }
}

std::vector<std::vector<int>> encode_lines(const std::vector<std::string>& lines,
                                           const BpeModel& bpe, const Vocab& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(bpe.encode(l, vocab));
  return out;
}

std::vector<std::string> non_empty(std::vector<std::string> lines) {
  std::erase_if(lines, [](const std::string& s) { return s.empty(); });
  return lines;
}

std::string format_score(double s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", s);
  return buf;
}

}  // namespace

void gen_data(const RunConfig& cfg, const std::string& out_dir) {
  const auto source = cfg.domain_spec(false);
  const auto target = cfg.domain_spec(true);
  const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  const std::size_t n_train = cfg.size("data.train_utts"), n_dev = cfg.size("data.dev_utts");
  // Distinct sampling streams per split.
  const auto train = corpus::gen_domain_corpus(source, n_train, seed * 10 + 1, "src-train");
  const auto src_dev = corpus::gen_domain_corpus(source, n_dev, seed * 10 + 2, "src-dev");
  const auto tgt_dev = corpus::gen_domain_corpus(target, n_dev, seed * 10 + 3, "tgt-dev");
  const auto tgt_text = corpus::gen_domain_text(target, cfg.size("data.target_text_utts"), seed * 10 + 4);

  fs::create_directories(out_dir);
  const fs::path d(out_dir);
  auto write_split = [&](const std::string& name, const std::vector<corpus::UttRecord>& utts) {
    corpus::write_features((d / (name + ".feats")).string(), utts);
    corpus::write_manifest((d / (name + ".txt")).string(), utts);
  };
  write_split("source_train", train);
  write_split("source_dev", src_dev);
  write_split("target_dev", tgt_dev);
  std::vector<std::string> src_text;
  for (const auto& u : train) src_text.push_back(u.transcript);
  corpus::write_lines((d / "source_text.txt").string(), src_text);
  corpus::write_lines((d / "target_text.txt").string(), tgt_text);
  write_log((d / "gen-data").string(), "gen-data", cfg, {});
}

void train_bpe(const RunConfig& cfg, const std::vector<std::string>& text_paths,
               const std::string& model_out, const std::string& vocab_out) {
  if (text_paths.empty()) throw Error("io: bpe-train needs at least one text file");
  std::vector<std::string> lines;
  for (const auto& p : text_paths) {
    require_file(p, "text corpus");
    for (auto& l : corpus::read_lines(p)) lines.push_back(std::move(l));
  }
  const BpeModel bpe = bpe_train(non_empty(lines), static_cast<int>(cfg.size("bpe.vocab_size")));
  ensure_parent(model_out);
  ensure_parent(vocab_out);
  bpe.save(model_out);
  bpe.vocab().save(vocab_out);
  std::vector<std::pair<std::string, std::string>> in;
  for (const auto& p : text_paths) in.emplace_back("text", p);
  write_log(model_out, "bpe-train", cfg, in);
}

void train_lm(const RunConfig& cfg, const std::string& text_path, const std::string& bpe_path,
              const std::string& out_ckpt) {
  require_file(text_path, "text corpus");
  require_file(bpe_path, "BPE model");
  const BpeModel bpe = BpeModel::load(bpe_path);
  const Vocab vocab = bpe.vocab();
  const auto data = encode_lines(non_empty(corpus::read_lines(text_path)), bpe, vocab);
  const auto result = lm_train(data, cfg.lm_config(static_cast<std::size_t>(vocab.size())), vocab,
                               cfg.lm_train_options(false));
  ensure_parent(out_ckpt);
  save_checkpoint(result.model.to_checkpoint(), out_ckpt);
  write_log(out_ckpt, "lm-train", cfg, {{"text", text_path}, {"bpe", bpe_path}}, result.epoch_loss);
}

void finetune_lm(const RunConfig& cfg, const std::string& lm_ckpt, const std::string& text_path,
                 const std::string& bpe_path, const std::string& out_ckpt) {
  require_file(lm_ckpt, "LM checkpoint");
  require_file(text_path, "text corpus");
  require_file(bpe_path, "BPE model");
  const auto model = TransformerLM::from_checkpoint(load_checkpoint(lm_ckpt));
  const BpeModel bpe = BpeModel::load(bpe_path);
  const Vocab vocab = bpe.vocab();
  const auto data = encode_lines(non_empty(corpus::read_lines(text_path)), bpe, vocab);
  const auto result = lm_finetune(model, data, vocab, cfg.lm_train_options(true));
  ensure_parent(out_ckpt);
  save_checkpoint(result.model.to_checkpoint(), out_ckpt);
  write_log(out_ckpt, "lm-finetune", cfg, {{"lm", lm_ckpt}, {"text", text_path}, {"bpe", bpe_path}}, result.epoch_loss);
}

void train_asr(const RunConfig& cfg, const std::string& feats, const std::string& manifest,
               const std::string& bpe_path, const std::string& lm_ckpt, const std::string& out_ckpt) {
  require_file(feats, "feature file");
  require_file(manifest, "transcript manifest");
  require_file(bpe_path, "BPE model");
  const BpeModel bpe = BpeModel::load(bpe_path);
  const Vocab vocab = bpe.vocab();
  std::unique_ptr<TransformerLM> lm;
  if (!lm_ckpt.empty()) {
    require_file(lm_ckpt, "LM checkpoint");
    lm = std::make_unique<TransformerLM>(TransformerLM::from_checkpoint(load_checkpoint(lm_ckpt)));
    if (!(lm->vocab() == vocab)) throw Error("vocab: LM vocabulary differs from the BPE vocabulary");
  }
  auto utts = corpus::read_features(feats);
  corpus::attach_transcripts(utts, manifest);
  std::vector<AsrExample> data;
  for (const auto& u : utts) data.push_back({u.id, u.feature_tensor(), bpe.encode(u.transcript, vocab)});

  const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  AsrModel init(cfg.asr_config(static_cast<std::size_t>(vocab.size())), vocab, seed);
  if (lm) init.load_internal_lm(*lm);
  const auto result = asr_train(init, data, cfg.asr_train_options());
  ensure_parent(out_ckpt);
  save_checkpoint(result.model.to_checkpoint(), out_ckpt);
  write_log(out_ckpt, "asr-train", cfg,
            {{"feats", feats}, {"manifest", manifest}, {"bpe", bpe_path}, {"lm", lm_ckpt}}, result.epoch_loss);
}

void swap_ilm(const RunConfig& cfg, const std::string& asr_ckpt, const std::string& lm_ckpt, const std::string& out_ckpt) {
  require_file(asr_ckpt, "ASR checkpoint");
  require_file(lm_ckpt, "LM checkpoint");
  const auto out = replace_internal_lm(load_checkpoint(asr_ckpt), load_checkpoint(lm_ckpt));
  ensure_parent(out_ckpt);
  save_checkpoint(out, out_ckpt);
  write_log(out_ckpt, "swap-ilm", cfg, {{"asr", asr_ckpt}, {"lm", lm_ckpt}});
}

void count_freqs(const RunConfig& cfg, const std::string& text_path, const std::string& bpe_path,
                 const std::string& out_path) {
  require_file(text_path, "text corpus");
  require_file(bpe_path, "BPE model");
  const BpeModel bpe = BpeModel::load(bpe_path);
  const Vocab vocab = bpe.vocab();
  const auto data = encode_lines(corpus::read_lines(text_path), bpe, vocab);
  const auto counts = adapt::count_tokens(data, vocab.size(), cfg.flag("counts.count_eos"));
  ensure_parent(out_path);
  adapt::save_counts(counts, vocab, out_path);
  write_log(out_path, "count-freqs", cfg, {{"text", text_path}, {"bpe", bpe_path}});
}

DecodeMethod parse_method(const std::string& s) {
  if (s == "hybrid") return DecodeMethod::kHybrid;
  if (s == "attention") return DecodeMethod::kAttention;
  if (s == "ctc_greedy") return DecodeMethod::kCtcGreedy;
  if (s == "ctc_prefix") return DecodeMethod::kCtcPrefix;
  throw Error("config: unknown decode.method '" + s + "' (hybrid|attention|ctc_greedy|ctc_prefix)");
}

void decode(const RunConfig& cfg, const DecodeRequest& req) {
  require_file(req.asr_ckpt, "ASR checkpoint");
  require_file(req.feats, "feature file");
  if (req.out_nbest.empty()) throw Error("io: missing output path");
  if (req.rs_source.empty() != req.rs_target.empty())
    throw Error("config: R-softmax needs both source and target frequency tables");
  if (req.jobs < 1) throw Error("config: --jobs must be >= 1");
  const auto method = parse_method(cfg.str("decode.method"));
  const auto dc = cfg.decode_config();

  Checkpoint ckpt = load_checkpoint(req.asr_ckpt);
  if (!req.replace_ilm.empty()) {
    require_file(req.replace_ilm, "replacement LM checkpoint");
    ckpt = replace_internal_lm(ckpt, load_checkpoint(req.replace_ilm));
  }
  const AsrModel model = AsrModel::from_checkpoint(ckpt);
  const Vocab& vocab = model.vocab();

  std::unique_ptr<adapt::PriorRatio> ratio;
  if (!req.rs_source.empty()) {
    require_file(req.rs_source, "source frequency table");
    require_file(req.rs_target, "target frequency table");
    const auto ps = adapt::smooth(adapt::load_counts(vocab, req.rs_source), adapt::Domain::kSource);
    const auto pt = adapt::smooth(adapt::load_counts(vocab, req.rs_target), adapt::Domain::kTarget);
    ratio = std::make_unique<adapt::PriorRatio>(adapt::prior_ratio(pt, ps));
  }
  auto load_lm = [&](const std::string& path, const char* what) -> std::unique_ptr<TransformerLM> {
    if (path.empty()) return nullptr;
    require_file(path, what);
    auto lm = std::make_unique<TransformerLM>(TransformerLM::from_checkpoint(load_checkpoint(path)));
    if (!(lm->vocab() == vocab)) throw Error(std::string("vocab: ") + what + " vocabulary differs from the ASR model's");
    return lm;
  };
  const auto lm_t = load_lm(req.lm_target, "target LM");
  const auto lm_s = load_lm(req.lm_source, "source LM");
  const auto utts = corpus::read_features(req.feats);
  for (const auto& u : utts)
    if (u.dim != model.config().encoder.input_dim)
      throw Error("shape: utterance '" + u.id + "' has feature dim " + std::to_string(u.dim) +
                  ", model expects " + std::to_string(model.config().encoder.input_dim));
  const decode::ExternalLms lms{lm_t.get(), lm_s.get()};

  std::vector<std::vector<std::string>> lines(utts.size());
  std::string failure;
  const auto n = static_cast<long>(utts.size());
#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(req.jobs))
  for (long i = 0; i < n; ++i) {
    try {
      NoGradGuard guard;
      const auto& u = utts[static_cast<std::size_t>(i)];
      std::vector<std::pair<double, std::string>> nbest;
      if (method == DecodeMethod::kCtcGreedy || method == DecodeMethod::kCtcPrefix) {
        const Tensor enc = model.encode(u.feature_tensor());
        const auto lp = decode::ctc_log_posteriors(model, enc, ratio.get());
        const std::size_t T = enc.dim(0), V = static_cast<std::size_t>(vocab.size());
        if (method == DecodeMethod::kCtcGreedy) {
          double score = 0.0;
          for (std::size_t t = 0; t < T; ++t)
            score += *std::max_element(lp.begin() + static_cast<long>(t * V),
                                       lp.begin() + static_cast<long>((t + 1) * V));
          nbest.emplace_back(score, decode_tokens(decode::ctc_greedy_decode(lp, T, V), vocab));
        } else {
          auto res = decode::ctc_prefix_beam_search(lp, T, V, dc.beam);
          for (std::size_t r = 0; r < res.size() && r < dc.nbest; ++r)
            nbest.emplace_back(res[r].log_prob, decode_tokens(res[r].tokens, vocab));
        }
      } else {
        std::vector<decode::Hypothesis> hyps;
        if (method == DecodeMethod::kAttention)
          hyps = decode::attention_beam_search(model, model.encode(u.feature_tensor()), dc, lms);
        else
          hyps = decode::hybrid_joint_decode(model, u.feature_tensor(), dc, lms, ratio.get());
        for (const auto& h : hyps) nbest.emplace_back(h.score, decode::hypothesis_text(h, vocab));
      }
      if (nbest.empty()) nbest.emplace_back(-std::numeric_limits<double>::infinity(), "");
      for (std::size_t r = 0; r < nbest.size(); ++r)
        lines[static_cast<std::size_t>(i)].push_back(u.id + "\t" + std::to_string(r + 1) + "\t" +
                                                     format_score(nbest[r].first) + "\t" +
                                                     nbest[r].second);
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw Error(failure);
  std::vector<std::string> flat;
  for (auto& l : lines)
    for (auto& x : l) flat.push_back(std::move(x));
  ensure_parent(req.out_nbest);
  corpus::write_lines(req.out_nbest, flat);
  write_log(req.out_nbest, "decode", cfg,
            {{"asr", req.asr_ckpt}, {"feats", req.feats}, {"replace_ilm", req.replace_ilm},
             {"r_softmax_source", req.rs_source}, {"r_softmax_target", req.rs_target},
             {"lm_target", req.lm_target}, {"lm_source", req.lm_source}});
}

eval::WerReport score(const std::string& ref_manifest, const std::string& hyp_path,
                      const std::string& out_report) {
  require_file(ref_manifest, "reference manifest");
  require_file(hyp_path, "hypothesis file");
  const auto report = eval::score_corpus(ref_manifest, hyp_path);
  if (!out_report.empty()) {
    ensure_parent(out_report);
    corpus::write_lines(out_report, {report.to_string()});
  }
  return report;
}

std::vector<ConditionResult> run_experiment(const RunConfig& cfg, const std::string& dir,
                                            std::size_t jobs) {
  const fs::path d(dir);
  auto p = [&](const std::string& name) { return (d / name).string(); };
  gen_data(cfg, dir);
  train_bpe(cfg, {p("source_text.txt"), p("target_text.txt")}, p("bpe.model"), p("vocab.txt"));
  train_lm(cfg, p("source_text.txt"), p("bpe.model"), p("source_lm.ckpt"));
  finetune_lm(cfg, p("source_lm.ckpt"), p("target_text.txt"), p("bpe.model"), p("target_lm.ckpt"));
  train_asr(cfg, p("source_train.feats"), p("source_train.txt"), p("bpe.model"), p("source_lm.ckpt"),
            p("asr.ckpt"));
  swap_ilm(cfg, p("asr.ckpt"), p("target_lm.ckpt"), p("asr_target_ilm.ckpt"));
  count_freqs(cfg, p("source_text.txt"), p("bpe.model"), p("source.freqs"));
  count_freqs(cfg, p("target_text.txt"), p("bpe.model"), p("target.freqs"));

  struct Condition {
    std::string name, split, method;
    bool swap, rs;
    std::string fusion;
  };
  const std::vector<Condition> grid = {
      {"target/ctc_greedy/baseline", "target_dev", "ctc_greedy", false, false, "none"},
      {"target/ctc_greedy/r_softmax", "target_dev", "ctc_greedy", false, true, "none"},
      {"target/hybrid/baseline", "target_dev", "hybrid", false, false, "none"},
      {"target/hybrid/rilm", "target_dev", "hybrid", true, false, "none"},
      {"target/hybrid/r_softmax", "target_dev", "hybrid", false, true, "none"},
      {"target/hybrid/rilm+r_softmax", "target_dev", "hybrid", true, true, "none"},
      {"target/hybrid/shallow_fusion", "target_dev", "hybrid", false, false, "shallow"},
      {"target/hybrid/density_ratio", "target_dev", "hybrid", false, false, "density_ratio"},
      {"source/ctc_greedy/baseline", "source_dev", "ctc_greedy", false, false, "none"},
      {"source/hybrid/baseline", "source_dev", "hybrid", false, false, "none"},
      {"source/hybrid/rilm+r_softmax", "source_dev", "hybrid", true, true, "none"},
  };
  std::vector<ConditionResult> out;
  std::vector<std::string> table;
  for (const auto& c : grid) {
    RunConfig dcfg = cfg;
    dcfg.set("decode.method", c.method);
    dcfg.set("decode.fusion", c.fusion);
    DecodeRequest req;
    req.asr_ckpt = p("asr.ckpt");
    req.feats = p(c.split + ".feats");
    std::string tag = c.name;
    std::replace(tag.begin(), tag.end(), '/', '.');
    req.out_nbest = p("decode/" + tag + ".nbest");
    if (c.swap) req.replace_ilm = p("target_lm.ckpt");
    if (c.rs) {
      req.rs_source = p("source.freqs");
      req.rs_target = p("target.freqs");
    }
    if (c.fusion != "none") req.lm_target = p("target_lm.ckpt");
    if (c.fusion == "density_ratio") req.lm_source = p("source_lm.ckpt");
    req.jobs = jobs;
    decode(dcfg, req);
    const auto report = score(p(c.split + ".txt"), req.out_nbest, p("decode/" + tag + ".wer"));
    out.push_back({c.name, report});
    table.push_back(c.name + "\t" + report.to_string());
  }
  corpus::write_lines(p("wer_table.txt"), table);
  return out;
}

}  // namespace rilm::pipeline
