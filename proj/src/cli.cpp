#include "empathy/cli.hpp"

#include <spdlog/spdlog.h>

#include <csignal>
#include <fstream>
#include <ostream>
#include <thread>

#include "CLI11.hpp"
#include "empathy/config.hpp"
#include "empathy/corpus.hpp"
#include "empathy/error.hpp"
#include "empathy/generation.hpp"
#include "empathy/io.hpp"
#include "empathy/judging.hpp"
#include "empathy/metrics.hpp"
#include "empathy/retrieval.hpp"
#include "empathy/service.hpp"

namespace empathy::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Common {
    std::string providers;
    std::string template_path;
};

ProviderConfig provider_config(const Common& c) {
    return c.providers.empty() ? ProviderConfig::all_mock() : ProviderConfig::load(c.providers);
}

PromptTemplate prompt_template(const Common& c) {
    return c.template_path.empty() ? PromptTemplate::defaults() : PromptTemplate::load(c.template_path);
}

SplitRatio parse_ratio(const std::string& text) {
    SplitRatio r;
    char c1 = 0, c2 = 0;
    std::istringstream in(text);
    if (!(in >> r.train >> c1 >> r.valid >> c2 >> r.test) || c1 != ':' || c2 != ':' || r.train < 0 || r.valid < 0 ||
        r.test < 0 || r.train + r.valid + r.test <= 0) {
        throw CLI::ValidationError("--ratio", "expected A:B:C with non-negative parts, got '" + text + "'");
    }
    return r;
}

std::vector<Dialogue> parse_csv(const std::string& path, const EmotionSet& emotions, std::ostream& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    auto parsed = parse_corpus(in, emotions);
    out << path << ": " << parsed.dialogues.size() << " dialogues from " << parsed.stats.rows << " rows ("
        << parsed.stats.dropped_rows << " dropped)\n";
    return std::move(parsed.dialogues);
}

// ---------------------------------------------------------------------------

struct IngestArgs {
    std::string input, train, valid, test, out_dir, ratio = "8:1:1", emotions;
    std::uint64_t seed = 0;
};

int run_ingest(const IngestArgs& a, std::ostream& out) {
    const auto emotions = a.emotions.empty() ? EmotionSet::builtin() : EmotionSet::load(a.emotions);
    CorpusSplit split;
    if (!a.input.empty()) {
        split = split_corpus(parse_csv(a.input, emotions, out), parse_ratio(a.ratio), a.seed);
    } else {
        split.train = parse_csv(a.train, emotions, out);
        if (!a.valid.empty()) split.valid = parse_csv(a.valid, emotions, out);
        split.test = parse_csv(a.test, emotions, out);
    }
    fs::create_directories(a.out_dir);
    save_corpus(fs::path(a.out_dir) / "train.jsonl", split.train);
    save_corpus(fs::path(a.out_dir) / "valid.jsonl", split.valid);
    save_corpus(fs::path(a.out_dir) / "test.jsonl", split.test);
    out << "train " << split.train.size() << ", valid " << split.valid.size() << ", test " << split.test.size()
        << " -> " << a.out_dir << '\n';
    return kExitOk;
}

struct IndexArgs {
    std::string train, out;
    std::size_t parallelism = 8;
};

int run_index(const IndexArgs& a, const Common& c, std::ostream& out) {
    auto providers = make_providers(provider_config(c), prompt_template(c));
    const auto train = load_corpus(a.train);
    const auto index = build_index(train, *providers.embedder, a.parallelism);
    index.save(a.out);
    out << "indexed " << index.size() << " dialogues (" << index.encoder_id() << ", dim " << index.dimension()
        << ") -> " << a.out << '\n';
    return kExitOk;
}

struct GenerateArgs {
    std::string data, train, index, out, strategy = "zero-shot", variant = "inferred", knowledge_query = "last-speaker";
    std::size_t shots = 5, top_m = 1, limit = 0, parallelism = 8;
    std::uint64_t seed = 0;
};

GenerationStrategy strategy_of(const GenerateArgs& a) {
    if (a.strategy == "zero-shot") return GenerationStrategy::zero_shot();
    if (a.strategy == "few-shot") return GenerationStrategy::few_shot(a.shots);
    if (a.strategy == "ss-icl") return GenerationStrategy::semantic_icl(a.shots);
    if (a.strategy == "two-stage") return GenerationStrategy::two_stage(parse_variant(a.variant));
    return GenerationStrategy::knowledge(a.top_m);
}

int run_generate(const GenerateArgs& a, const Common& c, std::ostream& out) {
    const auto strategy = strategy_of(a);
    strategy.validate();
    GenerationSettings settings;
    settings.tmpl = prompt_template(c);
    settings.parallelism = a.parallelism;
    settings.knowledge_query =
        a.knowledge_query == "full-context" ? KnowledgeQuery::FullContext : KnowledgeQuery::LastSpeakerUtterance;
    const auto config = provider_config(c);
    auto providers = make_providers(config, settings.tmpl);
    settings.chat_model = providers.chat_model;

    auto items = derive_eval_items(load_corpus(a.data));
    if (a.limit > 0 && items.size() > a.limit) items.resize(a.limit);

    using K = GenerationStrategy::Kind;
    std::vector<Dialogue> pool;
    std::optional<ExemplarIndex> index;
    GenerationResources res;
    res.chat = providers.chat.get();
    res.embedder = providers.embedder.get();
    res.commonsense = providers.commonsense.get();
    if (strategy.kind == K::FewShotRandom) {
        if (a.train.empty()) throw CLI::ValidationError("--train", "few-shot needs --train");
        pool = load_corpus(a.train);
        res.train_pool = &pool;
    }
    if (strategy.kind == K::SemanticIcl) {
        if (a.index.empty()) throw CLI::ValidationError("--index", "ss-icl needs --index");
        if (a.train.empty()) throw CLI::ValidationError("--train", "ss-icl needs --train");
        pool = load_corpus(a.train);
        res.train_pool = &pool;
        index = ExemplarIndex::load(a.index, providers.embedder->encoder_id());
        res.index = &*index;
    }

    const auto manifest = run_batch(items, strategy, res, settings, a.seed, {{"providers", config.to_json()}});
    manifest.save(a.out);
    const auto failed = manifest.failures();
    out << strategy.label() << ": " << manifest.outcomes.size() - failed << "/" << manifest.outcomes.size()
        << " items ok, run " << manifest.run_id << " -> " << a.out << '\n';
    for (const auto& o : manifest.outcomes) {
        if (o.error) spdlog::warn("{} failed: {}", o.item.id(), *o.error);
    }
    return failed > 0 ? kExitPartial : kExitOk;
}

struct EvaluateArgs {
    std::string manifest, json_out;
};

int run_evaluate(const EvaluateArgs& a, const Common& c, std::ostream& out) {
    auto providers = make_providers(provider_config(c), prompt_template(c));
    const auto manifest = RunManifest::load(a.manifest);
    const auto report = evaluate_manifest(manifest, *providers.token_embedder);
    out << report.table();
    if (!a.json_out.empty()) atomic_write(a.json_out, report.to_json().dump(2) + "\n");
    return kExitOk;
}

struct JudgeArgs {
    std::string a, b, out;
    std::uint64_t seed = 0;
    std::size_t parallelism = 8;
};

int run_judge(const JudgeArgs& a, const Common& c, std::ostream& out) {
    const auto tmpl = prompt_template(c);
    auto providers = make_providers(provider_config(c), tmpl);
    const auto ma = RunManifest::load(a.a);
    const auto mb = RunManifest::load(a.b);
    JudgeSettings settings;
    settings.tmpl = tmpl;
    settings.model = providers.judge_model;
    const auto run = judge_manifests(ma, mb, *providers.judge, a.seed, settings, a.parallelism);
    if (!a.out.empty()) {
        std::ostringstream buf;
        write_ratings(buf, run.ratings);
        atomic_write(a.out, buf.str());
    }
    out << "A = " << ma.strategy.label() << ", B = " << mb.strategy.label() << '\n';
    out << "aspect          win   tie  lose\n";
    for (const auto& [aspect, t] : run.tally) {
        char line[96];
        std::snprintf(line, sizeof line, "%-14s%5zu %5zu %5zu\n", std::string(aspect_name(aspect)).c_str(), t.win,
                      t.tie, t.lose);
        out << line;
    }
    for (const auto& s : run.skipped) spdlog::warn("judge skipped {}", s);
    return run.skipped.empty() ? kExitOk : kExitPartial;
}

struct CorrelateArgs {
    std::string human, model, overall = "pooled", json_out;
};

int run_correlate(const CorrelateArgs& a, std::ostream& out) {
    const auto mode = a.overall == "mean" ? OverallMode::MeanOfAspects : OverallMode::Pooled;
    const auto report = correlate_raters(load_ratings(a.human), load_ratings(a.model), mode);
    out << report.table();
    if (!a.json_out.empty()) atomic_write(a.json_out, report.to_json().dump(2) + "\n");
    return kExitOk;
}

struct ServeArgs {
    std::string host = "127.0.0.1", train, index, snapshot;
    int port = 8080;
    std::uint64_t seed = 0;
};

int run_serve(const ServeArgs& a, const Common& c, std::ostream& out) {
    GenerationSettings settings;
    settings.tmpl = prompt_template(c);
    auto providers = make_providers(provider_config(c), settings.tmpl);
    settings.chat_model = providers.chat_model;

    std::vector<Dialogue> pool;
    std::optional<ExemplarIndex> index;
    GenerationResources res;
    res.chat = providers.chat.get();
    res.embedder = providers.embedder.get();
    res.commonsense = providers.commonsense.get();
    if (!a.train.empty()) {
        pool = load_corpus(a.train);
        res.train_pool = &pool;
    }
    if (!a.index.empty()) {
        index = ExemplarIndex::load(a.index, providers.embedder->encoder_id());
        res.index = &*index;
    }
    ChatService service(res, settings, a.seed);
    if (!a.snapshot.empty() && fs::exists(a.snapshot)) service.load_snapshot(a.snapshot);

    // Signals are taken synchronously by a watcher so the server can stop cleanly.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    ChatHttpServer server(service);
    const int port = server.bind(a.host, a.port);
    out << "serving on http://" << a.host << ":" << port << std::endl;
    std::thread watcher([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    server.run();
    pthread_kill(watcher.native_handle(), SIGTERM);
    watcher.join();
    if (!a.snapshot.empty()) service.save_snapshot(a.snapshot);
    return kExitOk;
}

struct ReplayArgs {
    std::string manifest;
};

int run_replay(const ReplayArgs& a, const Common& c, std::ostream& out) {
    auto providers = make_providers(provider_config(c), prompt_template(c));
    const auto manifest = RunManifest::load(a.manifest);
    const auto report = replay_manifest(manifest, *providers.chat);
    out << "replayed " << report.replayed << ", identical " << report.identical << ", mismatched "
        << report.mismatched_ids.size() << ", failed " << report.failed_ids.size() << '\n';
    for (const auto& id : report.mismatched_ids) out << "mismatch " << id << '\n';
    for (const auto& id : report.failed_ids) out << "failed " << id << '\n';
    return report.mismatched_ids.empty() && report.failed_ids.empty() ? kExitOk : kExitFailure;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Empathetic response generation and evaluation harness", "empathy"};
    app.require_subcommand(1);
    Common common;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--providers", common.providers, "Provider config JSON (default: all mock)")
            ->check(CLI::ExistingFile);
        sub->add_option("--template", common.template_path, "Prompt template JSON")->check(CLI::ExistingFile);
    };

    IngestArgs ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse a dialogue CSV and write train/valid/test JSONL");
    auto* input_opt = ingest_cmd->add_option("--input", ingest.input, "Single CSV to split")->check(CLI::ExistingFile);
    auto* train_csv = ingest_cmd->add_option("--train", ingest.train, "Pre-split train CSV")->check(CLI::ExistingFile);
    ingest_cmd->add_option("--valid", ingest.valid, "Pre-split valid CSV")->check(CLI::ExistingFile)->needs(train_csv);
    auto* test_csv = ingest_cmd->add_option("--test", ingest.test, "Pre-split test CSV")->check(CLI::ExistingFile);
    train_csv->needs(test_csv)->excludes(input_opt);
    test_csv->needs(train_csv);
    ingest_cmd->add_option("--out-dir", ingest.out_dir, "Output directory")->required();
    ingest_cmd->add_option("--ratio", ingest.ratio, "Split ratio train:valid:test")->capture_default_str();
    ingest_cmd->add_option("--seed", ingest.seed, "Split seed")->capture_default_str();
    ingest_cmd->add_option("--emotions", ingest.emotions, "Emotion label list")->check(CLI::ExistingFile);

    IndexArgs index;
    auto* index_cmd = app.add_subcommand("index", "Embed training dialogues into an exemplar index");
    index_cmd->add_option("--train", index.train, "Train JSONL")->required()->check(CLI::ExistingFile);
    index_cmd->add_option("--out", index.out, "Index output path")->required();
    index_cmd->add_option("--parallelism", index.parallelism)->check(CLI::PositiveNumber);
    add_common(index_cmd);

    GenerateArgs gen;
    auto* gen_cmd = app.add_subcommand("generate", "Generate Listener replies for every test item");
    gen_cmd->add_option("--data", gen.data, "Evaluation JSONL")->required()->check(CLI::ExistingFile);
    gen_cmd->add_option("--train", gen.train, "Exemplar pool JSONL")->check(CLI::ExistingFile);
    gen_cmd->add_option("--index", gen.index, "Exemplar index")->check(CLI::ExistingFile);
    gen_cmd->add_option("--out", gen.out, "Manifest output path")->required();
    gen_cmd->add_option("--strategy", gen.strategy)
        ->check(CLI::IsMember({"zero-shot", "few-shot", "ss-icl", "two-stage", "knowledge"}))
        ->capture_default_str();
    gen_cmd->add_option("--shots", gen.shots, "Exemplars for few-shot and ss-icl")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen_cmd->add_option("--variant", gen.variant)
        ->check(CLI::IsMember({"inferred", "emo", "situ"}))
        ->capture_default_str();
    gen_cmd->add_option("--top-m", gen.top_m, "Inferences kept per relation")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--knowledge-query", gen.knowledge_query)
        ->check(CLI::IsMember({"last-speaker", "full-context"}));
    gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
    gen_cmd->add_option("--limit", gen.limit, "Process only the first N items (0 = all)");
    gen_cmd->add_option("--parallelism", gen.parallelism)->check(CLI::PositiveNumber);
    add_common(gen_cmd);

    EvaluateArgs eval;
    auto* eval_cmd = app.add_subcommand("evaluate", "Automatic metrics over a manifest");
    eval_cmd->add_option("--manifest", eval.manifest)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--json", eval.json_out, "Also write the report as JSON");
    add_common(eval_cmd);

    JudgeArgs judge;
    auto* judge_cmd = app.add_subcommand("judge", "Pairwise A/B judging of two manifests");
    judge_cmd->add_option("--a", judge.a, "Manifest A")->required()->check(CLI::ExistingFile);
    judge_cmd->add_option("--b", judge.b, "Manifest B")->required()->check(CLI::ExistingFile);
    judge_cmd->add_option("--out", judge.out, "Ratings JSONL output");
    judge_cmd->add_option("--seed", judge.seed)->capture_default_str();
    judge_cmd->add_option("--parallelism", judge.parallelism)->check(CLI::PositiveNumber);
    add_common(judge_cmd);

    CorrelateArgs corr;
    auto* corr_cmd = app.add_subcommand("correlate", "Rank correlation between two ratings files");
    corr_cmd->add_option("--human", corr.human)->required()->check(CLI::ExistingFile);
    corr_cmd->add_option("--model", corr.model)->required()->check(CLI::ExistingFile);
    corr_cmd->add_option("--overall", corr.overall)->check(CLI::IsMember({"pooled", "mean"}))->capture_default_str();
    corr_cmd->add_option("--json", corr.json_out, "Also write the report as JSON");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP chat service");
    serve_cmd->add_option("--host", serve.host)->capture_default_str();
    serve_cmd->add_option("--port", serve.port)->check(CLI::Range(0, 65535))->capture_default_str();
    serve_cmd->add_option("--train", serve.train, "Exemplar pool JSONL")->check(CLI::ExistingFile);
    serve_cmd->add_option("--index", serve.index, "Exemplar index")->check(CLI::ExistingFile);
    serve_cmd->add_option("--snapshot", serve.snapshot, "Session snapshot loaded at start, written on shutdown");
    serve_cmd->add_option("--seed", serve.seed);
    add_common(serve_cmd);

    ReplayArgs replay;
    auto* replay_cmd = app.add_subcommand("replay", "Re-send a manifest's requests and compare replies");
    replay_cmd->add_option("--manifest", replay.manifest)->required()->check(CLI::ExistingFile);
    add_common(replay_cmd);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
        if (*ingest_cmd && ingest.input.empty() && ingest.train.empty()) {
            throw CLI::ValidationError("ingest", "give --input, or --train and --test");
        }
    } catch (const CLI::CallForHelp&) {
        out << app.help(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name());
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*ingest_cmd) return run_ingest(ingest, out);
        if (*index_cmd) return run_index(index, common, out);
        if (*gen_cmd) return run_generate(gen, common, out);
        if (*eval_cmd) return run_evaluate(eval, common, out);
        if (*judge_cmd) return run_judge(judge, common, out);
        if (*corr_cmd) return run_correlate(corr, out);
        if (*serve_cmd) return run_serve(serve, common, out);
        if (*replay_cmd) return run_replay(replay, common, out);
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace empathy::cli
