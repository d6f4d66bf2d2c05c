#pragma once

#include <string>
#include <vector>

#include "rilm/run_config.hpp"
#include "rilm/wer.hpp"

// File-to-file stages shared by the command-line tool and the experiment
// driver. Each stage reads and validates all of its inputs before it writes
// anything, and leaves `<output>.log` with the effective configuration.
namespace rilm::pipeline {

// Writes source_train / source_dev / target_dev (.feats + .txt manifest),
// source_text.txt and target_text.txt into out_dir.
void gen_data(const RunConfig& cfg, const std::string& out_dir);

void train_bpe(const RunConfig& cfg, const std::vector<std::string>& text_paths,
               const std::string& model_out, const std::string& vocab_out);

void train_lm(const RunConfig& cfg, const std::string& text_path, const std::string& bpe_path,
              const std::string& out_ckpt);

void finetune_lm(const RunConfig& cfg, const std::string& lm_ckpt, const std::string& text_path,
                 const std::string& bpe_path, const std::string& out_ckpt);

// lm_ckpt (optional) initializes the internal LM.
void train_asr(const RunConfig& cfg, const std::string& feats, const std::string& manifest,
               const std::string& bpe_path, const std::string& lm_ckpt, const std::string& out_ckpt);

void swap_ilm(const RunConfig& cfg, const std::string& asr_ckpt, const std::string& lm_ckpt, const std::string& out_ckpt);

void count_freqs(const RunConfig& cfg, const std::string& text_path, const std::string& bpe_path,
                 const std::string& out_path);

enum class DecodeMethod { kHybrid, kAttention, kCtcGreedy, kCtcPrefix };
DecodeMethod parse_method(const std::string& s);

struct DecodeRequest {
  std::string asr_ckpt;
  std::string feats;
  std::string out_nbest;
  std::string replace_ilm;  // LM checkpoint swapped in before decoding
  std::string rs_source, rs_target;  // frequency tables enabling R-softmax
  std::string lm_target, lm_source;  // external LMs for fusion
  std::size_t jobs = 1;
};
void decode(const RunConfig& cfg, const DecodeRequest& req);

// Writes a one-line report when out_report is non-empty.
eval::WerReport score(const std::string& ref_manifest, const std::string& hyp_path,
                      const std::string& out_report);

struct ConditionResult {
  std::string name;
  eval::WerReport report;
};

// Runs every stage into dir and decodes the adaptation grid on both dev sets.
std::vector<ConditionResult> run_experiment(const RunConfig& cfg, const std::string& dir,
                                            std::size_t jobs);

}  // namespace rilm::pipeline
