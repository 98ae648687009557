#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "wuyun/pipeline.hpp"

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "config error: cannot open " << path << "\n";
        std::exit(wuyun::kExitConfig);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"WuYun hierarchical skeleton-guided melody generation pipeline"};
    app.require_subcommand(1);

    wuyun::PipelineConfig cfg;
    std::string config_path, strategy = "rhythm", lm_json, inpaint_json;
    std::string stage_to_run;

    app.add_option("--config", config_path, "JSON config file; flags override it")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", cfg.seed, "run seed, recorded in every artifact");
    app.add_option("--work-dir", cfg.work_dir, "artifact root (or $WUYUN_WORK_DIR)");

    auto add_stage = [&](const char* name, const char* desc) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->callback([&, name] { stage_to_run = name; });
        return sub;
    };

    CLI::App* ingest = add_stage("ingest", "SMF files -> score JSON");
    ingest->add_option("input", cfg.input, "SMF file or directory")->required();
    ingest->add_option("-o,--out", cfg.output, "output directory");

    CLI::App* preprocess = add_stage("preprocess", "score JSON/SMF -> clean score JSON");
    preprocess->add_option("input", cfg.input)->required();
    preprocess->add_option("-o,--out", cfg.output);
    preprocess->add_flag("--report", cfg.report, "emit per-piece CSV report");
    preprocess->add_flag("--estimate-key", cfg.estimate_key,
                         "Krumhansl-style key estimate when metadata is absent");

    CLI::App* tension = add_stage("tension", "clean score JSON -> per-note tension CSV");
    tension->add_option("input", cfg.input)->required();
    tension->add_option("-o,--out", cfg.output);

    CLI::App* extract = add_stage("extract", "clean score JSON -> skeleton JSON");
    extract->add_option("input", cfg.input)->required();
    extract->add_option("-o,--out", cfg.output);
    extract->add_option("--strategy", strategy,
                        "downbeat|longnote|rhythm|tonic|intersection|union|random:p");

    CLI::App* tokenize = add_stage("tokenize", "clean score JSON -> MeMIDI tokens");
    tokenize->add_option("input", cfg.input)->required();
    tokenize->add_option("-o,--out", cfg.output);
    tokenize->add_option("--skeleton", cfg.skeleton_file, "mask the melody with this skeleton JSON");
    tokenize->add_flag("--skeleton-only", cfg.skeleton_only,
                       "extract with --strategy and tokenize the skeleton");
    tokenize->add_option("--strategy", strategy);
    tokenize->add_flag("--binary", cfg.binary_tokens, "write the binary id format");

    CLI::App* detokenize = add_stage("detokenize", "MeMIDI tokens -> clean score JSON");
    detokenize->add_option("input", cfg.input)->required();
    detokenize->add_option("-o,--out", cfg.output);
    detokenize->add_option("--smf", cfg.smf_out, "also write an SMF file");

    CLI::App* train_s = add_stage("train-skeleton", "train the skeleton LM on *.skeleton.tokens");
    train_s->add_option("input", cfg.input, "token directory")->required();
    train_s->add_option("-o,--out", cfg.output);
    train_s->add_option("--steps", cfg.train.steps);
    train_s->add_option("--batch-size", cfg.train.batch_size);
    train_s->add_option("--lr", cfg.train.lr);
    train_s->add_option("--workers", cfg.train.n_workers);
    train_s->add_option("--lm-config", lm_json, "model config JSON file");

    CLI::App* train_i = add_stage("train-inpaint", "train the inpainting model on token pairs");
    train_i->add_option("input", cfg.input, "token directory")->required();
    train_i->add_option("-o,--out", cfg.output);
    train_i->add_option("--steps", cfg.train.steps);
    train_i->add_option("--batch-size", cfg.train.batch_size);
    train_i->add_option("--lr", cfg.train.lr);
    train_i->add_option("--workers", cfg.train.n_workers);
    train_i->add_option("--inpaint-config", inpaint_json, "model config JSON file");

    CLI::App* generate = add_stage("generate", "two-stage generation (skeleton, then inpainting)");
    generate->add_option("-o,--out", cfg.output);
    generate->add_option("--skeleton-ckpt", cfg.skeleton_ckpt);
    generate->add_option("--inpaint-ckpt", cfg.inpaint_ckpt)->required();
    generate->add_option("--real-skeleton", cfg.real_skeleton,
                         "skip stage one; use this skeleton (tokens or clean JSON)");
    generate->add_option("--strategy", strategy, "extraction strategy for --real-skeleton JSON");
    generate->add_option("--prompt", cfg.prompt_file, "clean JSON or tokens to prompt with");
    generate->add_option("--prompt-bars", cfg.prompt_bars);
    generate->add_option("-k,--top-k", cfg.sampler.top_k);
    generate->add_option("--temperature", cfg.sampler.temperature);
    generate->add_option("--max-bars", cfg.sampler.max_bars);
    generate->add_flag("--copy-chords", cfg.copy_chords,
                       "copy chords from the prompt piece instead of sampling them");

    CLI::App* evaluate = add_stage("evaluate", "two clean-score corpora -> OA + skeleton stats");
    evaluate->add_option("input", cfg.input, "corpus A (e.g. generated)")->required();
    evaluate->add_option("reference", cfg.corpus_b, "corpus B (reference)")->required();
    evaluate->add_option("-o,--out", cfg.output);

    CLI::App* ttest = add_stage("ttest", "one-tailed Welch t-test on a ratings CSV");
    ttest->add_option("input", cfg.input, "ratings CSV")->required();
    ttest->add_option("--metric", cfg.metric)->required();
    ttest->add_option("--a", cfg.system_a)->required();
    ttest->add_option("--b", cfg.system_b)->required();
    ttest->add_flag("--paired", cfg.paired_ttest);

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) cfg.apply_json(slurp(config_path));
        if (const auto s = wuyun::StrategySpec::parse(strategy)) cfg.strategy = *s;
        else {
            std::cerr << "config error: unknown strategy " << strategy << "\n";
            return wuyun::kExitConfig;
        }
        if (!lm_json.empty()) cfg.lm_config = wuyun::nn::ModelConfig::from_json(slurp(lm_json));
        if (!inpaint_json.empty())
            cfg.inpaint_config = wuyun::nn::ModelConfig::from_json(slurp(inpaint_json));
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return wuyun::kExitConfig;
    }

    return wuyun::run_stage(stage_to_run, cfg, std::cout, std::cerr);
}
