#include "ietrans/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "ietrans/benchmark.hpp"
#include "ietrans/data_model.hpp"
#include "ietrans/error.hpp"
#include "ietrans/evaluation.hpp"
#include "ietrans/external_transfer.hpp"
#include "ietrans/integration.hpp"
#include "ietrans/internal_transfer.hpp"
#include "ietrans/manifest.hpp"
#include "ietrans/scorer.hpp"

namespace ietrans {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kConfigEnv = "IETRANS_CONFIG";

// Pipeline knobs. Precedence: explicit flag > config file > profile > built-in.
struct Knobs {
    std::string profile = "vg50";
    double k_internal = 70;
    double k_external = 100;
    std::size_t head_exclude = 15;
    double alpha = FrequencyBaseline::kDefaultAlpha;
    double beta = FrequencyBaseline::kDefaultBeta;
    unsigned workers = 1;
};

struct KnobFlags {
    std::optional<std::string> config;
    std::optional<std::string> profile;
    std::optional<double> k_internal;
    std::optional<double> k_external;
    std::optional<std::size_t> head_exclude;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<unsigned> workers;
};

void apply_profile(Knobs& k, const std::string& profile) {
    if (profile == "vg50") {
        k.k_internal = 70;
        k.k_external = 100;
        k.head_exclude = 15;
    } else if (profile == "vg1800") {
        k.k_internal = 90;
        k.k_external = 100;
        k.head_exclude = 0;
    } else {
        throw ArgumentError("unknown profile '" + profile + "' (expected vg50 or vg1800)");
    }
    k.profile = profile;
}

Knobs resolve(const KnobFlags& f) {
    json cfg = json::object();
    std::optional<std::string> path = f.config;
    if (!path) {
        if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') path = env;
    }
    if (path) {
        std::ifstream in(*path);
        if (!in) throw IoError("cannot open config '" + *path + "'");
        try {
            cfg = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ParseError(0, "config '" + *path + "': " + e.what());
        }
        if (!cfg.is_object()) throw ParseError(0, "config '" + *path + "' must be a JSON object");
    }
    Knobs k;
    try {
        apply_profile(k, f.profile.value_or(cfg.value("profile", std::string("vg50"))));
        k.k_internal = f.k_internal.value_or(cfg.value("kI", k.k_internal));
        k.k_external = f.k_external.value_or(cfg.value("kE", k.k_external));
        k.head_exclude = f.head_exclude.value_or(cfg.value("head_exclude", k.head_exclude));
        k.alpha = f.alpha.value_or(cfg.value("alpha", k.alpha));
        k.beta = f.beta.value_or(cfg.value("beta", k.beta));
        k.workers = f.workers.value_or(cfg.value("workers", k.workers));
    } catch (const json::exception& e) {
        throw ParseError(0, std::string("config value has the wrong type: ") + e.what());
    }
    return k;
}

void add_common(CLI::App* sub, KnobFlags& f) {
    sub->add_option("--config", f.config, "JSON file with default knob values (env " + std::string(kConfigEnv) + ")");
    sub->add_option("--workers", f.workers, "Worker threads; outputs do not depend on it")->check(CLI::PositiveNumber);
}

void add_profile(CLI::App* sub, KnobFlags& f) {
    sub->add_option("--profile", f.profile, "vg50 (kI=70, kE=100, head=15) or vg1800 (kI=90, kE=100, head=0)");
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

void write_json_file(const fs::path& path, const json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

void write_manifest_sidecar(const fs::path& artifact, const RunManifest& m) {
    write_json_file(artifact.string() + ".manifest.json", m.to_json());
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        lines.push_back(line.substr(first, last - first + 1));
    }
    return lines;
}

json knob_json(const Knobs& k) {
    return {{"profile", k.profile}, {"kI", k.k_internal}, {"kE", k.k_external}, {"head_exclude", k.head_exclude},
            {"alpha", k.alpha}, {"beta", k.beta}};
}

// ---------------------------------------------------------------------------

int cmd_stats(const std::string& data, const std::string& vocab_path, std::ostream& out) {
    const Vocab vocab = load_vocab(vocab_path);
    const Dataset d = load_dataset(data, vocab);
    const TripletIndex idx = build_triplet_index(d);
    out << "images\t" << d.images.size() << '\n'
        << "objects\t" << d.num_objects() << '\n'
        << "relations\t" << d.num_relations() << '\n'
        << "triplet_types\t" << idx.num_types() << '\n'
        << "na_candidates\t" << enumerate_na(d).size() << '\n';
    out << "predicate\tinstances\ttypes\n";
    std::vector<std::size_t> types(vocab.score_size(), 0);
    for (const auto& [t, n] : idx.counts()) ++types[t.predicate];
    for (PredicateId p = 1; p < vocab.score_size(); ++p) {
        out << vocab.predicate_name(p) << '\t' << idx.predicate_total(p) << '\t' << types[p] << '\n';
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"IETrans dataset relabeling and evaluation toolkit", "ietrans"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::string data, vocab_path, scores_path, out_path;
    KnobFlags knobs;

    // stats
    auto* stats = app.add_subcommand("stats", "Corpus, triplet and NA-candidate counts");
    stats->add_option("--data", data, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    stats->add_option("--vocab", vocab_path, "Vocabulary file")->required()->check(CLI::ExistingFile);

    // score
    std::optional<std::string> fit_path, external_path;
    bool binary = false;
    bool no_na = false;
    auto* score = app.add_subcommand("score", "Write a score dump for annotated pairs and NA candidates");
    score->add_option("--data", data, "Dataset to score")->required()->check(CLI::ExistingFile);
    score->add_option("--vocab", vocab_path, "Vocabulary file")->required()->check(CLI::ExistingFile);
    score->add_option("--fit", fit_path, "Fit the frequency baseline on this dataset (default: --data)")
        ->check(CLI::ExistingFile);
    score->add_option("--external", external_path, "Validate and subset an external score dump instead")
        ->check(CLI::ExistingFile);
    score->add_option("--alpha", knobs.alpha, "Laplace smoothing");
    score->add_option("--beta", knobs.beta, "Constant NA prior");
    score->add_flag("--no-na", no_na, "Skip NA candidate pairs");
    score->add_flag("--binary", binary, "Write the binary score format");
    score->add_option("--out", out_path, "Output score dump")->required();
    add_common(score, knobs);

    // internal
    std::optional<double> adaptive_k;
    std::optional<std::string> confusion_dir, pairs_out;
    auto* internal = app.add_subcommand("internal", "Build an internal transfer plan");
    internal->add_option("--data", data, "Training dataset")->required()->check(CLI::ExistingFile);
    internal->add_option("--vocab", vocab_path, "Vocabulary file")->required()->check(CLI::ExistingFile);
    internal->add_option("--scores", scores_path, "Score dump covering annotated pairs")->required()->check(
        CLI::ExistingFile);
    internal->add_option("--kI", knobs.k_internal, "Percentage of candidates moved per target")
        ->check(CLI::Range(0.0, 100.0));
    auto* adaptive_opt =
        internal->add_option("--adaptive-k", adaptive_k, "Use the adaptive cut mean + k*sigma instead of --kI");
    internal->add_option("--confusion-dir", confusion_dir, "Write one confusion-matrix CSV per class pair");
    internal->add_option("--pairs-report", pairs_out, "Write the transfer-pair ranking TSV");
    internal->add_option("--out", out_path, "Output plan JSONL")->required();
    add_profile(internal, knobs);
    add_common(internal, knobs);
    adaptive_opt->excludes("--kI");

    // external
    std::optional<std::string> summary_out;
    auto* external = app.add_subcommand("external", "Build an external transfer plan");
    external->add_option("--data", data, "Training dataset")->required()->check(CLI::ExistingFile);
    external->add_option("--vocab", vocab_path, "Vocabulary file")->required()->check(CLI::ExistingFile);
    external->add_option("--scores", scores_path, "Score dump covering NA candidates")->required()->check(
        CLI::ExistingFile);
    external->add_option("--kE", knobs.k_external, "Percentage of eligible NA candidates labeled")
        ->check(CLI::Range(0.0, 100.0));
    external->add_option("--head-exclude", knobs.head_exclude, "Most frequent predicates never used as labels");
    external->add_option("--summary", summary_out, "Write additions per predicate TSV");
    external->add_option("--out", out_path, "Output plan JSONL")->required();
    add_profile(external, knobs);
    add_common(external, knobs);

    // merge
    std::optional<std::string> internal_plan, external_plan;
    auto* merge_cmd = app.add_subcommand("merge", "Apply plans and write the enhanced dataset");
    merge_cmd->add_option("--data", data, "Original dataset")->required()->check(CLI::ExistingFile);
    merge_cmd->add_option("--vocab", vocab_path, "Vocabulary file")->required()->check(CLI::ExistingFile);
    merge_cmd->add_option("--internal", internal_plan, "Internal plan JSONL")->check(CLI::ExistingFile);
    merge_cmd->add_option("--external", external_plan, "External plan JSONL")->check(CLI::ExistingFile);
    merge_cmd->add_option("--out", out_path, "Enhanced dataset JSONL")->required();

    // evaluate
    std::string family = "accuracy";
    std::vector<int> ks;
    bool no_graph = false;
    std::optional<std::string> json_out, breakdown_out;
    auto* evaluate = app.add_subcommand("evaluate", "Metrics of a score dump on a test dataset");
    evaluate->add_option("--data", data, "Test dataset")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--vocab", vocab_path, "Vocabulary file")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--scores", scores_path, "Score dump covering test pairs")->required()->check(
        CLI::ExistingFile);
    evaluate->add_option("--family", family, "accuracy (Acc/mAcc/F-Acc/Non-Zero) or recall (R@K/mR@K/F@K)")
        ->check(CLI::IsMember({"accuracy", "recall"}));
    evaluate->add_option("--k", ks, "K values (default 1,5,10 or 20,50,100)")->delimiter(',');
    evaluate->add_flag("--no-graph-constraint", no_graph, "Let every predicate of a pair compete (recall)");
    evaluate->add_option("--out", out_path, "Summary TSV");
    evaluate->add_option("--json", json_out, "Full report JSON");
    evaluate->add_option("--breakdown", breakdown_out, "Per-predicate TSV");

    // split
    SplitConfig split_cfg;
    std::optional<std::string> blocklist;
    std::string out_dir;
    auto* split = app.add_subcommand("split", "Constrained train/val/test split");
    split->add_option("--data", data, "Corpus")->required()->check(CLI::ExistingFile);
    split->add_option("--vocab", vocab_path, "Vocabulary file")->required()->check(CLI::ExistingFile);
    split->add_option("--train-fraction", split_cfg.train_fraction, "Image share of train+val");
    split->add_option("--val-images", split_cfg.val_image_count, "Validation images at full scale");
    split->add_option("--min-test", split_cfg.min_test_per_predicate, "Minimum test instances per predicate");
    split->add_option("--min-train", split_cfg.min_train_per_predicate, "Minimum train instances per predicate");
    split->add_option("--blocklist", blocklist, "Newline-delimited predicate names to remove")
        ->check(CLI::ExistingFile);
    split->add_option("--seed", split_cfg.seed, "Shuffle seed");
    split->add_option("--out-dir", out_dir, "Output directory")->required();

    // synth
    SynthConfig synth_cfg;
    std::size_t generals = 3;
    double ambiguity = 0.5;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic long-tailed corpus with truth sidecar");
    synth->add_option("--images", synth_cfg.num_images, "Images");
    synth->add_option("--objects", synth_cfg.num_object_classes, "Object classes");
    synth->add_option("--predicates", synth_cfg.num_predicates, "Predicates");
    synth->add_option("--zipf", synth_cfg.zipf_exponent, "Zipf exponent of predicate frequencies");
    synth->add_option("--generals", generals, "Number of general predicates");
    synth->add_option("--ambiguity", ambiguity, "Mislabel probability of informative predicates");
    synth->add_option("--deletion", synth_cfg.deletion_probability, "Probability a true relation is unannotated");
    synth->add_option("--seed", synth_cfg.seed, "Generator seed");
    synth->add_option("--out-dir", out_dir, "Output directory")->required();
    add_common(synth, knobs);

    // report
    std::optional<std::string> before, after, plan_path;
    std::size_t bins = 10, top_n = 0;
    auto* report = app.add_subcommand("report", "Distribution-change and transfer-pair reports");
    report->add_option("--vocab", vocab_path, "Vocabulary file")->required()->check(CLI::ExistingFile);
    report->add_option("--before", before, "Original dataset")->check(CLI::ExistingFile);
    report->add_option("--after", after, "Enhanced dataset")->check(CLI::ExistingFile);
    report->add_option("--bins", bins, "Equal-width rank bins")->check(CLI::PositiveNumber);
    report->add_option("--plan", plan_path, "Internal plan for the transfer-pair ranking")->check(CLI::ExistingFile);
    report->add_option("--top-n", top_n, "Rows of the pair ranking (0 = all)");
    report->add_option("--out", out_path, "Output TSV (default stdout)");

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.push_back("ietrans");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }

    try {
        const Knobs k = resolve(knobs);
        RunManifest manifest;
        manifest.command = app.get_subcommands().front()->get_name();

        if (stats->parsed()) return cmd_stats(data, vocab_path, out);

        if (score->parsed()) {
            const Vocab vocab = load_vocab(vocab_path);
            const Dataset d = load_dataset(data, vocab);
            manifest.add_input("data", data);
            manifest.add_input("vocab", vocab_path);
            std::vector<PairKey> keys = annotated_pairs(d);
            if (!no_na) {
                const auto na = candidate_keys(enumerate_na(d, k.workers));
                keys.insert(keys.end(), na.begin(), na.end());
            }
            ScoreTable table;
            if (external_path) {
                manifest.add_input("external_scores", *external_path);
                manifest.params = {{"source", "external"}};
                const ScoreTable ext = load_external_scores(*external_path, vocab);
                table = score_pairs(d, keys, std::cref(ext), k.workers);
            } else {
                const Dataset train = fit_path ? load_dataset(*fit_path, vocab) : d;
                if (fit_path) manifest.add_input("fit", *fit_path);
                const FrequencyBaseline model = fit_frequency_baseline(train, k.alpha, k.beta);
                manifest.params = {{"source", "frequency_baseline"},
                                   {"alpha", k.alpha},
                                   {"beta", k.beta},
                                   {"scorer_fingerprint", model.fingerprint()}};
                table = score_pairs(d, keys, std::cref(model), k.workers);
            }
            manifest.params["na_candidates"] = !no_na;
            save_scores(table, out_path, binary, manifest.to_json());
            if (binary) write_manifest_sidecar(out_path, manifest);
            out << "scored\t" << table.size() << '\n';
            return 0;
        }

        if (internal->parsed()) {
            const Vocab vocab = load_vocab(vocab_path);
            const Dataset d = load_dataset(data, vocab);
            const ScoreTable scores = load_external_scores(scores_path, vocab);
            const TripletIndex idx = build_triplet_index(d);
            InternalPlan plan = adaptive_k ? build_plan_adaptive(d, scores, idx, *adaptive_k, k.workers)
                                           : build_plan(d, scores, idx, k.k_internal, k.workers);
            manifest.add_input("data", data);
            manifest.add_input("vocab", vocab_path);
            manifest.add_input("scores", scores_path);
            manifest.params = knob_json(k);
            plan.params["scorer_fingerprint"] = manifest.inputs.at("scores");
            plan.params["run"] = manifest.to_json();
            auto plan_out = open_output(out_path);
            write_internal_plan(plan, vocab, plan_out);
            if (confusion_dir) {
                fs::create_directories(*confusion_dir);
                const AggregatedScores agg = aggregate_scores(d, scores);
                std::set<std::pair<ClassId, ClassId>> class_pairs;
                for (const auto& [t, e] : agg) class_pairs.emplace(t.subject, t.object);
                for (const auto& [cs, co] : class_pairs) {
                    auto csv = open_output(fs::path(*confusion_dir) /
                                           (vocab.object_name(cs) + "__" + vocab.object_name(co) + ".csv"));
                    write_confusion_csv(agg, vocab, cs, co, csv);
                }
            }
            if (pairs_out) {
                auto tsv = open_output(*pairs_out);
                write_transfer_pair_tsv(transfer_pair_report(plan, vocab), tsv);
                write_manifest_sidecar(*pairs_out, manifest);
            }
            out << "moves\t" << plan.moves.size() << '\n';
            return 0;
        }

        if (external->parsed()) {
            const Vocab vocab = load_vocab(vocab_path);
            const Dataset d = load_dataset(data, vocab);
            const ScoreTable scores = load_external_scores(scores_path, vocab);
            scores.check_vocab(vocab);
            const TripletIndex idx = build_triplet_index(d);
            ExternalPlan plan = build_external_plan(enumerate_na(d, k.workers), scores, idx, k.k_external,
                                                    k.head_exclude);
            manifest.add_input("data", data);
            manifest.add_input("vocab", vocab_path);
            manifest.add_input("scores", scores_path);
            manifest.params = knob_json(k);
            plan.params["scorer_fingerprint"] = manifest.inputs.at("scores");
            plan.params["run"] = manifest.to_json();
            auto plan_out = open_output(out_path);
            write_external_plan(plan, vocab, plan_out);
            if (summary_out) {
                auto tsv = open_output(*summary_out);
                write_external_summary(plan, vocab, tsv);
                write_manifest_sidecar(*summary_out, manifest);
            }
            out << "additions\t" << plan.additions.size() << '\n';
            return 0;
        }

        if (merge_cmd->parsed()) {
            const Vocab vocab = load_vocab(vocab_path);
            const Dataset d = load_dataset(data, vocab);
            manifest.add_input("data", data);
            manifest.add_input("vocab", vocab_path);
            InternalPlan ip;
            ExternalPlan ep;
            if (internal_plan) {
                ip = load_internal_plan(*internal_plan, d);
                manifest.add_input("internal_plan", *internal_plan);
            }
            if (external_plan) {
                ep = load_external_plan(*external_plan, d);
                manifest.add_input("external_plan", *external_plan);
            }
            json extra = manifest.to_json();
            extra["sigma_convention"] = "population";
            const EnhancedDataset e = merge(d, ip, ep, extra);
            auto dst = open_output(out_path);
            write_enhanced(e, dst);
            out << "relations\t" << e.dataset.num_relations() << "\nmoved\t" << e.moved << "\nadded\t" << e.added
                << "\ncollisions\t" << e.collisions << '\n';
            return 0;
        }

        if (evaluate->parsed()) {
            const Vocab vocab = load_vocab(vocab_path);
            const Dataset test = load_dataset(data, vocab);
            const ScoreTable scores = load_external_scores(scores_path, vocab);
            const bool acc = family == "accuracy";
            if (ks.empty()) {
                if (acc) {
                    ks.assign(std::begin(kDefaultAccuracyKs), std::end(kDefaultAccuracyKs));
                } else {
                    ks.assign(std::begin(kDefaultRecallKs), std::end(kDefaultRecallKs));
                }
            }
            const MetricReport rep =
                acc ? accuracy_family(test, scores, ks) : recall_family(test, scores, ks, !no_graph);
            manifest.add_input("data", data);
            manifest.add_input("vocab", vocab_path);
            manifest.add_input("scores", scores_path);
            manifest.params = {{"family", family}, {"ks", ks}, {"graph_constraint", !no_graph}};
            write_report_tsv(rep, out);
            if (!out_path.empty()) {
                auto tsv = open_output(out_path);
                write_report_tsv(rep, tsv);
                write_manifest_sidecar(out_path, manifest);
            }
            if (json_out) {
                json j = report_to_json(rep, vocab);
                j["manifest"] = manifest.to_json();
                write_json_file(*json_out, j);
            }
            if (breakdown_out) {
                auto tsv = open_output(*breakdown_out);
                write_breakdown_tsv(rep, vocab, tsv);
            }
            return 0;
        }

        if (split->parsed()) {
            const Vocab vocab = load_vocab(vocab_path);
            const Dataset corpus = load_dataset(data, vocab);
            if (blocklist) {
                split_cfg.predicate_blocklist = read_lines(*blocklist);
                manifest.add_input("blocklist", *blocklist);
            }
            const SplitResult r = build_split(corpus, split_cfg);
            manifest.add_input("data", data);
            manifest.add_input("vocab", vocab_path);
            json dropped = json::array();
            for (const auto& dp : r.dropped) {
                dropped.push_back({{"predicate", vocab.predicate_name(dp.predicate)}, {"reason", dp.reason}});
            }
            manifest.params = {{"train_fraction", split_cfg.train_fraction},
                               {"val_image_count", split_cfg.val_image_count},
                               {"min_test", split_cfg.min_test_per_predicate},
                               {"min_train", split_cfg.min_train_per_predicate},
                               {"seed", split_cfg.seed},
                               {"dropped", dropped},
                               {"pre_repair_train_images", r.pre_repair_train_images},
                               {"repair_moves", r.repair_moves}};
            const json m = manifest.to_json();
            fs::create_directories(out_dir);
            for (const auto& [name, part] : {std::pair{"train", &r.train}, {"val", &r.val}, {"test", &r.test}}) {
                auto dst = open_output(fs::path(out_dir) / (std::string(name) + ".jsonl"));
                write_dataset(*part, dst, m);
            }
            write_json_file(fs::path(out_dir) / "manifest.json", m);
            out << "train\t" << r.train.images.size() << "\nval\t" << r.val.images.size() << "\ntest\t"
                << r.test.images.size() << "\ndropped\t" << r.dropped.size() << '\n';
            return 0;
        }

        if (synth->parsed()) {
            synth_cfg.ambiguity = default_ambiguity(synth_cfg.num_predicates, generals, ambiguity);
            const SynthCorpus c = synth_generate(synth_cfg, k.workers);
            manifest.params = {{"images", synth_cfg.num_images},
                               {"objects", synth_cfg.num_object_classes},
                               {"predicates", synth_cfg.num_predicates},
                               {"zipf", synth_cfg.zipf_exponent},
                               {"generals", generals},
                               {"ambiguity", ambiguity},
                               {"deletion", synth_cfg.deletion_probability},
                               {"seed", synth_cfg.seed}};
            const json m = manifest.to_json();
            fs::create_directories(out_dir);
            write_vocab(c.annotated.vocab, fs::path(out_dir) / "vocab.txt");
            auto ds = open_output(fs::path(out_dir) / "dataset.jsonl");
            write_dataset(c.annotated, ds, m);
            auto truth = open_output(fs::path(out_dir) / "truth.jsonl");
            write_dataset(c.truth, truth, m);
            write_json_file(fs::path(out_dir) / "manifest.json", m);
            out << "images\t" << c.annotated.images.size() << "\nannotated\t" << c.annotated.num_relations()
                << "\ntrue\t" << c.truth.num_relations() << '\n';
            return 0;
        }

        if (report->parsed()) {
            const Vocab vocab = load_vocab(vocab_path);
            std::ostringstream buf;
            if (before && after) {
                const Dataset b = load_dataset(*before, vocab);
                const Dataset a = load_dataset(*after, vocab);
                write_distribution_tsv(distribution_report(b, a, bins), vocab, buf);
                manifest.add_input("before", *before);
                manifest.add_input("after", *after);
            } else if (before || after) {
                throw ArgumentError("--before and --after must be given together");
            }
            if (plan_path) {
                if (!before) throw ArgumentError("--plan needs --before to resolve relation ids");
                const Dataset b = load_dataset(*before, vocab);
                if (!buf.str().empty()) buf << '\n';
                write_transfer_pair_tsv(transfer_pair_report(load_internal_plan(*plan_path, b), vocab, top_n), buf);
                manifest.add_input("plan", *plan_path);
            }
            if (!before && !plan_path) throw ArgumentError("report needs --before/--after and/or --plan");
            manifest.params = {{"bins", bins}, {"top_n", top_n}};
            if (out_path.empty()) {
                out << buf.str();
            } else {
                auto dst = open_output(out_path);
                dst << buf.str();
                write_manifest_sidecar(out_path, manifest);
            }
            return 0;
        }
    } catch (const Error& e) {
        err << json{{"error", e.kind()}, {"message", e.what()}}.dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace ietrans
