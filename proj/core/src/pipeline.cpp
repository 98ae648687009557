#include "wuyun/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "wuyun/errors.hpp"
#include "wuyun/eval.hpp"
#include "wuyun/memidi.hpp"
#include "wuyun/nn/checkpoint.hpp"
#include "wuyun/nn/loss.hpp"
#include "wuyun/preprocess.hpp"
#include "wuyun/score_json.hpp"
#include "wuyun/smf.hpp"
#include "wuyun/synth.hpp"
#include "wuyun/tension.hpp"

namespace wuyun {

namespace fs = std::filesystem;
using nlohmann::json;

void PipelineConfig::apply_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config file: ") + e.what());
    }
    if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
    if (j.contains("strategy")) {
        const auto s = StrategySpec::parse(j["strategy"].get<std::string>());
        if (!s) throw ConfigError("unknown strategy in config file");
        strategy = *s;
    }
    if (j.contains("lm_config")) lm_config = nn::ModelConfig::from_json(j["lm_config"].dump());
    if (j.contains("inpaint_config"))
        inpaint_config = nn::ModelConfig::from_json(j["inpaint_config"].dump());
    if (j.contains("sampler")) {
        const auto& s = j["sampler"];
        sampler.top_k = s.value("top_k", sampler.top_k);
        sampler.temperature = s.value("temperature", sampler.temperature);
        sampler.max_bars = s.value("max_bars", sampler.max_bars);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        train.steps = t.value("steps", train.steps);
        train.batch_size = t.value("batch_size", train.batch_size);
        train.lr = t.value("lr", train.lr);
        train.beta1 = t.value("beta1", train.beta1);
        train.beta2 = t.value("beta2", train.beta2);
        train.log_every = t.value("log_every", train.log_every);
        train.n_workers = t.value("n_workers", train.n_workers);
    }
    if (j.contains("estimate_key")) estimate_key = j["estimate_key"].get<bool>();
    if (j.contains("prompt_bars")) prompt_bars = j["prompt_bars"].get<int>();
}

std::uint64_t PipelineConfig::config_hash() const {
    std::ostringstream canon;
    canon << strategy.text() << '|' << lm_config.to_json() << '|' << inpaint_config.to_json()
          << '|' << sampler.top_k << ',' << sampler.temperature << ',' << sampler.max_bars << '|'
          << train.steps << ',' << train.batch_size << ',' << train.lr << '|' << skeleton_only
          << estimate_key << binary_tokens << prompt_bars;
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : canon.str()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

fs::path resolve_work_dir(const PipelineConfig& cfg) {
    if (!cfg.work_dir.empty()) return cfg.work_dir;
    if (const char* env = std::getenv("WUYUN_WORK_DIR")) return env;
    return ".";
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifact("cannot write " + path.string());
    out << text;
}

std::string hash_hex(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

/// Fill-forward sampled chords onto the one-per-beat grid so the result
/// satisfies the CleanScore contract.
void rebase_chords_per_beat(CleanScore& clean) {
    if (clean.chords.empty()) return;
    std::vector<ChordAnnotation> held;
    const int beats = std::max(1, (clean.end_tick() + kBeatTicks - 1) / kBeatTicks);
    size_t at = 0;
    ChordAnnotation active = clean.chords.front();
    for (int b = 0; b < beats; ++b) {
        while (at < clean.chords.size() && clean.chords[at].onset <= b * kBeatTicks)
            active = clean.chords[at++];
        held.push_back({b * kBeatTicks, active.root, active.quality});
    }
    clean.chords = std::move(held);
}

std::string with_meta(const std::string& json_text, const PipelineConfig& cfg) {
    json j = json::parse(json_text);
    j["meta"] = {{"tool_version", kToolVersion},
                 {"config_hash", hash_hex(cfg.config_hash())},
                 {"seed", cfg.seed}};
    return j.dump(2) + "\n";
}

std::string csv_meta_line(const PipelineConfig& cfg) {
    std::ostringstream out;
    out << "# " << kToolVersion << " config=" << hash_hex(cfg.config_hash())
        << " seed=" << cfg.seed << "\n";
    return out.str();
}

std::string meta_header_line(const PipelineConfig& cfg) {
    std::ostringstream out;
    out << "# meta\ttool=" << kToolVersion << "\tconfig=" << hash_hex(cfg.config_hash())
        << "\tseed=" << cfg.seed << "\n";
    return out.str();
}

std::vector<fs::path> inputs_in(const fs::path& p, std::initializer_list<const char*> exts) {
    std::vector<fs::path> files;
    if (fs::is_directory(p)) {
        for (const auto& entry : fs::directory_iterator(p)) {
            if (!entry.is_regular_file()) continue;
            const std::string name = entry.path().filename().string();
            for (const char* ext : exts)
                if (name.size() > std::strlen(ext) && name.ends_with(ext)) {
                    files.push_back(entry.path());
                    break;
                }
        }
        std::sort(files.begin(), files.end());
    } else if (fs::exists(p)) {
        files.push_back(p);
    } else {
        throw MissingArtifact("input " + p.string() + " does not exist");
    }
    if (files.empty()) throw MissingArtifact("no usable inputs under " + p.string());
    return files;
}

std::string stem_of(const fs::path& p) {
    std::string name = p.filename().string();
    const auto dot = name.find('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

Score load_score_any(const fs::path& path) {
    if (path.extension() == ".mid" || path.extension() == ".midi" || path.extension() == ".smf")
        return read_smf_file(path);
    return score_from_json(read_file(path));
}

CleanScore load_clean(const fs::path& path) { return clean_from_json(read_file(path)); }

std::vector<Token> prompt_from(const fs::path& path, int bars) {
    MeMidiSequence seq;
    if (path.extension() == ".tokens" || path.extension() == ".bin") seq = load_sequence(path);
    else seq = tokenize(load_clean(path));
    std::vector<Token> prompt;
    int seen = 0;
    for (const auto& t : seq.tokens) {
        if (t.kind == TokenKind::Bar && seen == bars) break;
        if (t.kind == TokenKind::Eos) break;
        if (t.kind == TokenKind::Bar) ++seen;
        prompt.push_back(t);
    }
    return prompt;
}

MeMidiSequence skeleton_from(const fs::path& path, const PipelineConfig& cfg) {
    if (path.extension() == ".tokens" || path.extension() == ".bin") return load_sequence(path);
    const CleanScore clean = load_clean(path);
    const auto annotation = extract(cfg.strategy, clean, cfg.seed);
    return tokenize(apply_mask(clean, annotation.mask), /*skeleton_only=*/true);
}

int stage_ingest(const PipelineConfig& cfg, std::ostream& out) {
    const auto files = inputs_in(cfg.input, {".mid", ".midi", ".smf"});
    const fs::path dir = cfg.output.empty() ? resolve_work_dir(cfg) / "scores" : cfg.output;
    for (const auto& f : files) {
        Score score = read_smf(
            [&] {
                std::ifstream in(f, std::ios::binary);
                return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                                 std::istreambuf_iterator<char>());
            }());
        if (score.source_id.empty()) score.source_id = stem_of(f);
        const fs::path target = dir / (stem_of(f) + ".score.json");
        write_file(target, with_meta(score_to_json(score), cfg));
        out << "ingest " << f.string() << " -> " << target.string() << " (" << score.notes.size()
            << " notes)\n";
    }
    return kExitOk;
}

int stage_preprocess(const PipelineConfig& cfg, std::ostream& out) {
    const auto files = inputs_in(cfg.input, {".score.json", ".json", ".mid", ".midi"});
    const fs::path dir = cfg.output.empty() ? resolve_work_dir(cfg) / "clean" : cfg.output;
    PreprocessOptions options;
    options.estimate_key_if_unknown = cfg.estimate_key;
    std::vector<PieceReport> reports;
    int kept = 0, rejected = 0;
    for (const auto& f : files) {
        try {
            const Score score = load_score_any(f);
            const auto cleans = preprocess_score(score, options, &reports);
            for (size_t i = 0; i < cleans.size(); ++i) {
                const std::string suffix = cleans.size() > 1 ? "_" + std::to_string(i) : "";
                const fs::path target = dir / (stem_of(f) + suffix + ".clean.json");
                write_file(target, with_meta(clean_to_json(cleans[i]), cfg));
                ++kept;
            }
        } catch (const RejectedPiece& e) {
            ++rejected;
            out << "rejected " << f.string() << ": " << e.what() << "\n";
        } catch (const UnknownKey& e) {
            ++rejected;
            out << "rejected " << f.string() << ": " << e.what() << "\n";
        }
    }
    if (cfg.report) {
        std::ostringstream csv;
        csv << csv_meta_line(cfg)
            << "source_id,segment,notes_in,notes_kept,dropped_short,dropped_collapsed,"
               "dropped_range,max_onset_shift,mean_onset_shift\n";
        for (const auto& r : reports) {
            char line[256];
            std::snprintf(line, sizeof line, "%s,%d,%d,%d,%d,%d,%d,%.1f,%.3f\n",
                          r.source_id.c_str(), r.segment, r.notes_in, r.notes_kept,
                          r.dropped_short, r.dropped_collapsed, r.dropped_range,
                          r.max_onset_shift, r.mean_onset_shift);
            csv << line;
        }
        write_file(dir / "preprocess_report.csv", csv.str());
    }
    out << "preprocess: " << kept << " clean pieces, " << rejected << " rejected\n";
    return kept > 0 ? kExitOk : kExitDataError;
}

int stage_tension(const PipelineConfig& cfg, std::ostream& out) {
    const auto files = inputs_in(cfg.input, {".clean.json"});
    const fs::path dir = cfg.output.empty() ? resolve_work_dir(cfg) / "tension" : cfg.output;
    for (const auto& f : files) {
        const CleanScore clean = load_clean(f);
        const auto profile = tension_profile(clean.notes, clean.key);
        std::ostringstream csv;
        csv << csv_meta_line(cfg) << "index,onset,pitch,pitch_class,tension\n";
        for (size_t i = 0; i < clean.notes.size(); ++i) {
            char line[96];
            std::snprintf(line, sizeof line, "%zu,%d,%d,%d,%.9f\n", i, clean.notes[i].onset,
                          clean.notes[i].pitch, clean.notes[i].pitch % 12, profile[i]);
            csv << line;
        }
        const fs::path target = dir / (stem_of(f) + ".tension.csv");
        write_file(target, csv.str());
        out << "tension " << f.string() << " -> " << target.string() << "\n";
    }
    return kExitOk;
}

int stage_extract(const PipelineConfig& cfg, std::ostream& out) {
    const auto files = inputs_in(cfg.input, {".clean.json"});
    const fs::path dir = cfg.output.empty() ? resolve_work_dir(cfg) / "skeletons" : cfg.output;
    for (const auto& f : files) {
        const CleanScore clean = load_clean(f);
        const auto annotation = extract(cfg.strategy, clean, cfg.seed);
        const fs::path target = dir / (stem_of(f) + ".skeleton.json");
        write_file(target, with_meta(skeleton_to_json(annotation, clean.source_id), cfg));
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * annotation.proportion());
        out << "extract " << cfg.strategy.text() << " " << f.string() << " -> "
            << target.string() << " (" << buf << ")\n";
    }
    return kExitOk;
}

int stage_tokenize(const PipelineConfig& cfg, std::ostream& out) {
    const auto files = inputs_in(cfg.input, {".clean.json"});
    const fs::path dir = cfg.output.empty() ? resolve_work_dir(cfg) / "tokens" : cfg.output;
    const Vocabulary vocab = Vocabulary::build();
    for (const auto& f : files) {
        CleanScore clean = load_clean(f);
        std::string kind = "melody";
        if (!cfg.skeleton_file.empty() || cfg.skeleton_only) {
            if (!cfg.skeleton_file.empty()) {
                const auto annotation = skeleton_from_json(read_file(cfg.skeleton_file)).first;
                clean = apply_mask(clean, annotation.mask);
            } else {
                const auto annotation = extract(cfg.strategy, clean, cfg.seed);
                clean = apply_mask(clean, annotation.mask);
            }
            kind = "skeleton";
        }
        const MeMidiSequence seq = tokenize(clean, kind == "skeleton");
        const char* ext = cfg.binary_tokens ? ".bin" : ".tokens";
        const fs::path target = dir / (stem_of(f) + "." + kind + ext);
        if (cfg.binary_tokens) {
            fs::create_directories(target.parent_path().empty() ? "." : target.parent_path());
            const auto bytes = sequence_to_binary(seq, vocab);
            std::ofstream bin(target, std::ios::binary);
            bin.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        } else {
            write_file(target, sequence_to_text(seq) + meta_header_line(cfg));
        }
        out << "tokenize " << f.string() << " -> " << target.string() << " ("
            << seq.tokens.size() << " tokens)\n";
    }
    return kExitOk;
}

int stage_detokenize(const PipelineConfig& cfg, std::ostream& out) {
    const auto files = inputs_in(cfg.input, {".tokens", ".bin"});
    const fs::path dir = cfg.output.empty() ? resolve_work_dir(cfg) / "detokenized" : cfg.output;
    for (const auto& f : files) {
        const MeMidiSequence seq = load_sequence(f);
        CleanScore clean = detokenize(seq);
        rebase_chords_per_beat(clean);
        const fs::path target = dir / (stem_of(f) + ".clean.json");
        write_file(target, with_meta(clean_to_json(clean), cfg));
        if (!cfg.smf_out.empty()) write_smf_file(clean.to_score(), cfg.smf_out);
        out << "detokenize " << f.string() << " -> " << target.string() << "\n";
    }
    return kExitOk;
}

std::vector<MeMidiSequence> load_token_corpus(const fs::path& dir, const char* pattern) {
    std::vector<MeMidiSequence> corpus;
    for (const auto& f : inputs_in(dir, {pattern})) corpus.push_back(load_sequence(f));
    return corpus;
}

int stage_train_skeleton(const PipelineConfig& cfg, std::ostream& out) {
    const Vocabulary vocab = Vocabulary::build();
    auto corpus = load_token_corpus(cfg.input, ".tokens");
    std::erase_if(corpus, [](const MeMidiSequence& s) { return !s.is_skeleton; });
    if (corpus.empty()) throw MissingArtifact("no skeleton token files in " + cfg.input.string());
    nn::SkeletonLm<float> model(cfg.lm_config, vocab, cfg.seed);

    nn::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const fs::path dir = cfg.output.empty() ? resolve_work_dir(cfg) / "models" : cfg.output;
    fs::create_directories(dir);
    std::ofstream csv(dir / "train_skeleton_progress.csv");
    const auto result = nn::train_lm(model, corpus, vocab, tc, &csv);
    const auto ckpt = nn::snapshot<float>(model, nullptr, vocab.hash(), cfg.seed,
                                          std::uint64_t(tc.steps));
    nn::save_checkpoint(ckpt, dir / "skeleton_lm.ckpt");
    out << "train-skeleton: " << corpus.size() << " sequences, final loss " << result.final_loss
        << ", accuracy " << result.final_accuracy << "\n"
        << "checkpoint " << (dir / "skeleton_lm.ckpt").string() << "\n";
    return kExitOk;
}

int stage_train_inpaint(const PipelineConfig& cfg, std::ostream& out) {
    const Vocabulary vocab = Vocabulary::build();
    std::map<std::string, std::pair<fs::path, fs::path>> stems;
    for (const auto& f : inputs_in(cfg.input, {".tokens"})) {
        const std::string name = f.filename().string();
        if (name.ends_with(".skeleton.tokens"))
            stems[name.substr(0, name.size() - 16)].first = f;
        else if (name.ends_with(".melody.tokens"))
            stems[name.substr(0, name.size() - 14)].second = f;
    }
    std::vector<std::pair<MeMidiSequence, MeMidiSequence>> pairs;
    for (const auto& [stem, paths] : stems)
        if (!paths.first.empty() && !paths.second.empty())
            pairs.emplace_back(load_sequence(paths.first), load_sequence(paths.second));
    if (pairs.empty())
        throw MissingArtifact("no <stem>.skeleton.tokens / <stem>.melody.tokens pairs in " +
                              cfg.input.string());

    nn::InpaintModel<float> model(cfg.inpaint_config, vocab, cfg.seed);
    nn::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const fs::path dir = cfg.output.empty() ? resolve_work_dir(cfg) / "models" : cfg.output;
    fs::create_directories(dir);
    std::ofstream csv(dir / "train_inpaint_progress.csv");
    const auto result = nn::train_seq2seq(model, pairs, vocab, tc, &csv);
    const auto ckpt = nn::snapshot<float>(model, nullptr, vocab.hash(), cfg.seed,
                                          std::uint64_t(tc.steps));
    nn::save_checkpoint(ckpt, dir / "inpaint.ckpt");
    out << "train-inpaint: " << pairs.size() << " pairs (" << result.skipped_too_long
        << " skipped), final loss " << result.final_loss << "\n"
        << "checkpoint " << (dir / "inpaint.ckpt").string() << "\n";
    return kExitOk;
}

int stage_generate(const PipelineConfig& cfg, std::ostream& out) {
    const Vocabulary vocab = Vocabulary::build();
    const fs::path dir = cfg.output.empty() ? resolve_work_dir(cfg) / "generated" : cfg.output;

    nn::SamplerConfig sampler = cfg.sampler;
    sampler.seed = cfg.seed;

    std::vector<Token> prompt;
    if (!cfg.prompt_file.empty()) prompt = prompt_from(cfg.prompt_file, cfg.prompt_bars);

    MeMidiSequence skeleton;
    nn::SampleAudit skeleton_audit;
    if (!cfg.real_skeleton.empty()) {
        skeleton = skeleton_from(cfg.real_skeleton, cfg);
    } else {
        if (cfg.skeleton_ckpt.empty())
            throw ConfigError("generate needs --skeleton-ckpt or --real-skeleton");
        const auto ckpt = nn::load_checkpoint(cfg.skeleton_ckpt);
        if (ckpt.vocab_hash != vocab.hash())
            throw VocabMismatch("skeleton checkpoint was trained with another vocabulary");
        nn::SkeletonLm<float> lm(ckpt.config, vocab, 0);
        nn::restore<float>(lm, nullptr, ckpt);
        std::vector<Token> skeleton_prompt;  // skeletons are generated from scratch
        skeleton = nn::sample_skeleton(lm, vocab, skeleton_prompt, sampler, &skeleton_audit);
    }
    skeleton.source_id = "generated-" + std::to_string(cfg.seed);

    if (cfg.inpaint_ckpt.empty()) throw ConfigError("generate needs --inpaint-ckpt");
    const auto ckpt = nn::load_checkpoint(cfg.inpaint_ckpt);
    if (ckpt.vocab_hash != vocab.hash())
        throw VocabMismatch("inpaint checkpoint was trained with another vocabulary");
    nn::InpaintModel<float> inpainter(ckpt.config, vocab, 0);
    nn::restore<float>(inpainter, nullptr, ckpt);

    nn::SampleAudit audit;
    MeMidiSequence melody =
        nn::inpaint(inpainter, vocab, skeleton, prompt, sampler, &audit, !cfg.copy_chords);
    melody.source_id = skeleton.source_id;

    CleanScore clean = detokenize(melody);
    if (cfg.copy_chords && !cfg.prompt_file.empty() && cfg.prompt_file.extension() == ".json")
        clean.chords = load_clean(cfg.prompt_file).chords;
    rebase_chords_per_beat(clean);  // sampled chords can be sparse

    write_file(dir / "skeleton.tokens", sequence_to_text(skeleton) + meta_header_line(cfg));
    write_file(dir / "melody.tokens", sequence_to_text(melody) + meta_header_line(cfg));
    write_file(dir / "melody.clean.json", with_meta(clean_to_json(clean), cfg));
    write_smf_file(clean.to_score(), dir / "melody.mid");

    const bool contained = nn::contains_skeleton(melody, skeleton);
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.4f", audit.fallback_rate());
    out << "generate: " << melody.bar_count() << " bars, " << melody.tokens.size()
        << " tokens, skeleton events " << nn::skeleton_events(skeleton.tokens).size()
        << ", contained=" << (contained ? "yes" : "NO") << ", grammar fallback rate " << rate
        << "\n"
        << "artifacts under " << dir.string() << "\n";
    return contained ? kExitOk : kExitNumeric;
}

int stage_evaluate(const PipelineConfig& cfg, std::ostream& out) {
    const fs::path dir = cfg.output.empty() ? resolve_work_dir(cfg) / "eval" : cfg.output;
    std::vector<CleanScore> a, b;
    for (const auto& f : inputs_in(cfg.input, {".clean.json"})) a.push_back(load_clean(f));
    for (const auto& f : inputs_in(cfg.corpus_b, {".clean.json"})) b.push_back(load_clean(f));

    std::ostringstream oa_csv;
    oa_csv << csv_meta_line(cfg) << "feature,overlapped_area\n";
    double mean_oa = 0;
    const Feature features[] = {Feature::PitchClass, Feature::NoteDuration,
                                Feature::OnsetPosition, Feature::IntervalSize};
    for (const Feature f : features) {
        const double oa = overlapped_area(feature_histogram(a, f), feature_histogram(b, f));
        mean_oa += oa / 4;
        char line[64];
        std::snprintf(line, sizeof line, "%s,%.6f\n", feature_name(f), oa);
        oa_csv << line;
    }
    {
        char line[64];
        std::snprintf(line, sizeof line, "mean,%.6f\n", mean_oa);
        oa_csv << line;
    }
    write_file(dir / "overlapped_area.csv", oa_csv.str());

    std::ostringstream sk_csv;
    sk_csv << csv_meta_line(cfg)
           << "corpus,strategy,pieces,mean_proportion,metrical,agogic,syncopated,total_notes\n";
    const char* strategies[] = {"downbeat",   "longnote", "rhythm",      "tonic",
                                "intersection", "union",  "random:0.25", "random:0.5",
                                "random:0.75"};
    const std::pair<const char*, std::span<const CleanScore>> corpora[] = {{"a", a}, {"b", b}};
    for (const auto& [label, corpus] : corpora) {
        for (const char* name : strategies) {
            const auto stats = skeleton_stats(corpus, *StrategySpec::parse(name), cfg.seed);
            char line[160];
            std::snprintf(line, sizeof line, "%s,%s,%zu,%.4f,%ld,%ld,%ld,%ld\n", label, name,
                          corpus.size(), stats.mean_proportion, stats.metrical_notes,
                          stats.agogic_notes, stats.syncopated_notes, stats.total_notes);
            sk_csv << line;
        }
    }
    write_file(dir / "skeleton_stats.csv", sk_csv.str());
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", mean_oa);
    out << "evaluate: mean OA " << buf << ", reports under " << dir.string() << "\n";
    return kExitOk;
}

int stage_ttest(const PipelineConfig& cfg, std::ostream& out) {
    const auto ratings = read_ratings_csv(read_file(cfg.input));
    if (cfg.metric.empty() || cfg.system_a.empty() || cfg.system_b.empty())
        throw ConfigError("ttest needs --metric, --a and --b");
    std::vector<double> a, b;
    for (const auto& r : ratings) {
        if (r.metric != cfg.metric) continue;
        if (r.system == cfg.system_a) a.push_back(r.score);
        if (r.system == cfg.system_b) b.push_back(r.score);
    }
    const TTestResult result =
        cfg.paired_ttest ? one_tailed_t_paired(a, b) : one_tailed_t(a, b);
    char line[160];
    std::snprintf(line, sizeof line,
                  "metric=%s a=%s (n=%zu) b=%s (n=%zu) t=%.6f dof=%.3f p=%.6g\n",
                  cfg.metric.c_str(), cfg.system_a.c_str(), a.size(), cfg.system_b.c_str(),
                  b.size(), result.t, result.dof, result.p);
    out << line;
    return kExitOk;
}

}  // namespace

int run_stage(const std::string& name, const PipelineConfig& cfg, std::ostream& out,
              std::ostream& err) {
    try {
        if (name == "ingest") return stage_ingest(cfg, out);
        if (name == "preprocess") return stage_preprocess(cfg, out);
        if (name == "tension") return stage_tension(cfg, out);
        if (name == "extract") return stage_extract(cfg, out);
        if (name == "tokenize") return stage_tokenize(cfg, out);
        if (name == "detokenize") return stage_detokenize(cfg, out);
        if (name == "train-skeleton") return stage_train_skeleton(cfg, out);
        if (name == "train-inpaint") return stage_train_inpaint(cfg, out);
        if (name == "generate") return stage_generate(cfg, out);
        if (name == "evaluate") return stage_evaluate(cfg, out);
        if (name == "ttest") return stage_ttest(cfg, out);
        err << "unknown stage " << name << "\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const MissingArtifact& e) {
        err << "missing artifact: " << e.what() << "\n";
        return kExitMissingArtifact;
    } catch (const NonFiniteLoss& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitDataError;
    }
}

}  // namespace wuyun
