// rilm-asr: command-line driver for the RILM / R-softmax toolkit.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rilm/error.hpp"
#include "rilm/pipeline.hpp"

namespace {

struct Common {
  std::string config_path;
  std::optional<long> seed;
  std::string out_dir;
  std::size_t jobs = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key=value config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "global seed");
  app->add_option("--out-dir", c.out_dir, "directory prefixed to relative output paths");
  app->add_option("--jobs", c.jobs, "parallel utterances")->check(CLI::PositiveNumber);
  app->add_option("--set", c.overrides, "config override key=value (repeatable)");
}

rilm::RunConfig build_config(const Common& c) {
  rilm::RunConfig cfg;
  if (!c.config_path.empty()) cfg.load_file(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw rilm::Error("config: --set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  return cfg;
}

std::string out_path(const Common& c, const std::string& p) {
  if (c.out_dir.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (std::filesystem::path(c.out_dir) / p).string();
}

template <typename T>
void override_if(rilm::RunConfig& cfg, const std::string& key, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_same_v<T, std::string>) cfg.set(key, *v);
  else {
    std::ostringstream os;
    os.precision(17);
    os << *v;
    cfg.set(key, os.str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RILM / R-softmax domain-adaptation toolkit for hybrid CTC/attention ASR"};
  app.require_subcommand(1);

  Common gen_c;
  auto* gen = app.add_subcommand("gen-data", "generate synthetic source/target corpora");
  add_common(gen, gen_c);

  Common bpe_c;
  std::vector<std::string> bpe_text;
  std::string bpe_model = "bpe.model", bpe_vocab = "vocab.txt";
  std::optional<long> bpe_size;
  auto* bpe = app.add_subcommand("bpe-train", "train a BPE model");
  add_common(bpe, bpe_c);
  bpe->add_option("--text", bpe_text, "text corpora, one utterance per line")->required();
  bpe->add_option("--model", bpe_model, "output BPE model");
  bpe->add_option("--vocab", bpe_vocab, "output vocabulary");
  bpe->add_option("--vocab-size", bpe_size, "target vocabulary size");

  Common lm_c;
  std::string lm_text, lm_bpe, lm_out;
  std::optional<long> lm_epochs;
  auto* lmt = app.add_subcommand("lm-train", "train a Transformer LM");
  add_common(lmt, lm_c);
  lmt->add_option("--text", lm_text)->required();
  lmt->add_option("--bpe", lm_bpe)->required();
  lmt->add_option("--out", lm_out)->required();
  lmt->add_option("--epochs", lm_epochs);

  Common ft_c;
  std::string ft_lm, ft_text, ft_bpe, ft_out;
  std::optional<long> ft_epochs;
  auto* ft = app.add_subcommand("lm-finetune", "fine-tune an LM on target-domain text");
  add_common(ft, ft_c);
  ft->add_option("--lm", ft_lm)->required();
  ft->add_option("--text", ft_text)->required();
  ft->add_option("--bpe", ft_bpe)->required();
  ft->add_option("--out", ft_out)->required();
  ft->add_option("--epochs", ft_epochs);

  Common asr_c;
  std::string asr_feats, asr_manifest, asr_bpe, asr_lm, asr_out;
  std::optional<long> asr_epochs;
  std::optional<double> asr_ctc;
  std::optional<std::string> asr_freeze;
  auto* asr = app.add_subcommand("asr-train", "train the hybrid CTC/attention model");
  add_common(asr, asr_c);
  asr->add_option("--feats", asr_feats)->required();
  asr->add_option("--manifest", asr_manifest)->required();
  asr->add_option("--bpe", asr_bpe)->required();
  asr->add_option("--lm", asr_lm, "pretrained LM for the internal-LM slot");
  asr->add_option("--out", asr_out)->required();
  asr->add_option("--epochs", asr_epochs);
  asr->add_option("--ctc-weight", asr_ctc);
  asr->add_option("--freeze-ilm", asr_freeze, "true|false");

  Common sw_c;
  std::string sw_asr, sw_lm, sw_out;
  auto* sw = app.add_subcommand("swap-ilm", "replace the internal LM of an ASR checkpoint");
  add_common(sw, sw_c);
  sw->add_option("--asr", sw_asr)->required();
  sw->add_option("--lm", sw_lm)->required();
  sw->add_option("--out", sw_out)->required();

  Common cf_c;
  std::string cf_text, cf_bpe, cf_out;
  std::optional<std::string> cf_eos;
  auto* cf = app.add_subcommand("count-freqs", "count token frequencies for R-softmax");
  add_common(cf, cf_c);
  cf->add_option("--text", cf_text)->required();
  cf->add_option("--bpe", cf_bpe)->required();
  cf->add_option("--out", cf_out)->required();
  cf->add_option("--count-eos", cf_eos, "true|false");

  Common dec_c;
  rilm::pipeline::DecodeRequest req;
  std::vector<std::string> rs;
  std::optional<std::string> dec_method, dec_fusion;
  std::optional<double> dec_ctc, dec_sf, dec_dt, dec_ds, dec_bonus;
  std::optional<long> dec_beam, dec_nbest, dec_maxlen;
  auto* dec = app.add_subcommand("decode", "decode a feature file into an n-best list");
  add_common(dec, dec_c);
  dec->add_option("--asr", req.asr_ckpt)->required();
  dec->add_option("--feats", req.feats)->required();
  dec->add_option("--out", req.out_nbest)->required();
  dec->add_option("--replace-ilm", req.replace_ilm, "LM checkpoint swapped in as internal LM");
  dec->add_option("--r-softmax", rs, "source and target frequency tables")->expected(2);
  dec->add_option("--lm-target", req.lm_target, "external target LM for fusion");
  dec->add_option("--lm-source", req.lm_source, "external source LM for density ratio");
  dec->add_option("--method", dec_method, "hybrid|attention|ctc_greedy|ctc_prefix");
  dec->add_option("--fusion", dec_fusion, "none|shallow|density_ratio");
  dec->add_option("--ctc-weight", dec_ctc);
  dec->add_option("--beam", dec_beam);
  dec->add_option("--nbest", dec_nbest);
  dec->add_option("--max-len", dec_maxlen);
  dec->add_option("--shallow-weight", dec_sf);
  dec->add_option("--dr-target-weight", dec_dt);
  dec->add_option("--dr-source-weight", dec_ds);
  dec->add_option("--length-bonus", dec_bonus);

  Common sc_c;
  std::string sc_ref, sc_hyp, sc_out;
  auto* sc = app.add_subcommand("score", "corpus-level WER");
  add_common(sc, sc_c);
  sc->add_option("--ref", sc_ref, "reference manifest")->required();
  sc->add_option("--hyp", sc_hyp, "manifest or n-best file")->required();
  sc->add_option("--out", sc_out, "report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    namespace pl = rilm::pipeline;
    if (*gen) {
      auto cfg = build_config(gen_c);
      pl::gen_data(cfg, gen_c.out_dir.empty() ? "." : gen_c.out_dir);
    } else if (*bpe) {
      auto cfg = build_config(bpe_c);
      override_if(cfg, "bpe.vocab_size", bpe_size);
      pl::train_bpe(cfg, bpe_text, out_path(bpe_c, bpe_model), out_path(bpe_c, bpe_vocab));
    } else if (*lmt) {
      auto cfg = build_config(lm_c);
      override_if(cfg, "lm.epochs", lm_epochs);
      pl::train_lm(cfg, lm_text, lm_bpe, out_path(lm_c, lm_out));
    } else if (*ft) {
      auto cfg = build_config(ft_c);
      override_if(cfg, "lm.finetune_epochs", ft_epochs);
      pl::finetune_lm(cfg, ft_lm, ft_text, ft_bpe, out_path(ft_c, ft_out));
    } else if (*asr) {
      auto cfg = build_config(asr_c);
      override_if(cfg, "asr.epochs", asr_epochs);
      override_if(cfg, "asr.ctc_weight", asr_ctc);
      override_if(cfg, "asr.freeze_ilm", asr_freeze);
      pl::train_asr(cfg, asr_feats, asr_manifest, asr_bpe, asr_lm, out_path(asr_c, asr_out));
    } else if (*sw) {
      pl::swap_ilm(build_config(sw_c), sw_asr, sw_lm, out_path(sw_c, sw_out));
    } else if (*cf) {
      auto cfg = build_config(cf_c);
      override_if(cfg, "counts.count_eos", cf_eos);
      pl::count_freqs(cfg, cf_text, cf_bpe, out_path(cf_c, cf_out));
    } else if (*dec) {
      auto cfg = build_config(dec_c);
      override_if(cfg, "decode.method", dec_method);
      override_if(cfg, "decode.fusion", dec_fusion);
      override_if(cfg, "decode.ctc_weight", dec_ctc);
      override_if(cfg, "decode.beam", dec_beam);
      override_if(cfg, "decode.nbest", dec_nbest);
      override_if(cfg, "decode.max_len", dec_maxlen);
      override_if(cfg, "decode.shallow_weight", dec_sf);
      override_if(cfg, "decode.dr_target_weight", dec_dt);
      override_if(cfg, "decode.dr_source_weight", dec_ds);
      override_if(cfg, "decode.length_bonus", dec_bonus);
      if (rs.size() == 2) {
        req.rs_source = rs[0];
        req.rs_target = rs[1];
      }
      req.jobs = dec_c.jobs;
      req.out_nbest = out_path(dec_c, req.out_nbest);
      pl::decode(cfg, req);
    } else if (*sc) {
      build_config(sc_c);
      const auto report = pl::score(sc_ref, sc_hyp, sc_out.empty() ? "" : out_path(sc_c, sc_out));
      std::cout << report.to_string() << "\n";
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    std::fprintf(stderr, "rilm-asr: %s\n", msg.c_str());
    return 1;
  }
  return 0;
}
