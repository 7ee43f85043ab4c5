#include "covaug/pipeline.hpp"

#include "covaug/change_model.hpp"
#include "covaug/generation_loop.hpp"
#include "covaug/patch_coverage.hpp"
#include "covaug/reporting.hpp"
#include "covaug/test_context.hpp"
#include "covaug/test_integration.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace covaug {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(StageStatus s)
{
    switch (s) {
    case StageStatus::Done: return "done";
    case StageStatus::Filtered: return "filtered";
    case StageStatus::FullyCovered: return "fully_covered";
    case StageStatus::Skipped: return "skipped";
    }
    return "skipped";
}

fs::path pr_dir(const Config& cfg, const std::string& pr_id)
{
    return fs::path(cfg.out_dir) / pr_id;
}

namespace {

json read_json(const std::string& path, std::string_view what)
{
    if (path.empty())
        throw InputError(std::string("missing required input: ") + std::string(what));
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw InputError(std::string(what) + ": " + e.what());
    }
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded())
        throw InputError(std::string(what) + ": " + path + " is not valid JSON");
    return doc;
}

void write_json(const fs::path& p, const json& doc)
{
    write_file_atomic(p.string(), doc.dump(2) + "\n");
}

struct PrInputs {
    PullRequest pr;
    std::string diff_text;
    fs::path dir;
};

PrInputs load_pr(const PipelineInputs& in, const Services& s)
{
    if (in.diff.empty())
        throw InputError("missing required input: --diff");
    if (in.pr_meta.empty())
        throw InputError("missing required input: --pr-meta");
    PrInputs p;
    try {
        p.diff_text = read_file(in.diff);
        p.pr = load_pr_metadata(read_file(in.pr_meta));
    } catch (const InputError&) {
        throw;
    } catch (const Error& e) {
        throw InputError(e.what());
    }
    p.pr.diff = parse_unified_diff(p.diff_text);
    if (p.pr.id.empty())
        throw InputError("PR metadata has no id");
    p.dir = pr_dir(s.config, p.pr.id);
    return p;
}

Workspace& workspace(Services& s)
{
    if (!s.workspace)
        throw InputError("a workspace (--workspace or paths.workspace) is required");
    return *s.workspace;
}

std::string read_ws(Services& s, const std::string& rel)
{
    try {
        return read_file((workspace(s).root() / rel).string());
    } catch (const InputError&) {
        throw;
    } catch (const Error& e) {
        throw InputError(e.what());
    }
}

ProvenanceLog open_log(const PrInputs& p, Services& s)
{
    return ProvenanceLog(*s.clock, (p.dir / "provenance.jsonl").string());
}

GatewayOptions gateway_options(const Config& c)
{
    GatewayOptions o;
    o.model = c.model;
    o.temperature = c.temperature;
    o.pricing = {c.price_prompt_per_mtok, c.price_completion_per_mtok};
    return o;
}

/// Status recorded by the coverage stage; later stages run only for partially covered PRs.
bool proceed(const PrInputs& p, std::string_view stage)
{
    fs::path pc_path = p.dir / "patch_coverage.json";
    if (!fs::exists(pc_path))
        throw InputError("no coverage stage output at " + pc_path.string() + "; run the coverage stage first");
    json doc = read_json(pc_path.string(), "patch coverage artifact");
    std::string status = doc.value("status", "");
    if (status == "partial")
        return true;
    spdlog::info("{} stage skipped: PR {} is {}", stage, p.pr.id, status);
    return false;
}

std::vector<FocalFunction> load_focals(const PrInputs& p)
{
    json doc = read_json((p.dir / "focals.json").string(), "focal functions artifact");
    require_schema_v1(doc, "focal functions");
    std::vector<FocalFunction> out;
    for (const auto& f : doc.at("focals"))
        out.push_back(focal_from_json(f));
    return out;
}

} // namespace

StageStatus run_coverage_stage(const PipelineInputs& in, Services& s)
{
    PrInputs p = load_pr(in, s);
    const Config& cfg = s.config;
    fs::remove_all(p.dir);
    fs::create_directories(p.dir);
    ProvenanceLog log = open_log(p, s);

    SelectionFilter filter;
    filter.exclusion_keywords = cfg.exclusion_keywords;
    filter.scope_denylist = cfg.scope_denylist;
    filter.max_code_files = static_cast<std::size_t>(cfg.max_code_files);
    if (!pr_selection_filter(p.pr, filter)) {
        spdlog::info("PR {} filtered out by the selection criteria", p.pr.id);
        write_json(p.dir / "patch_coverage.json", {{"schema_version", 1}, {"pr_id", p.pr.id}, {"status", "filtered"}});
        return StageStatus::Filtered;
    }

    CoverageReport cov;
    if (!in.coverage.empty()) {
        cov = coverage_from_json(read_json(in.coverage, "coverage report"));
    } else {
        ExecutionResult r = s.backend().run_suite(workspace(s), {}, {.coverage = true, .trace = false});
        if (!r.coverage)
            throw BackendError("suite run produced no coverage report");
        cov = *r.coverage;
    }
    cov = restrict_coverage(cov, cfg.scope_denylist, true);
    PatchCoverage pc = compute_patch_coverage(p.pr.diff, cov);

    json doc = to_json(pc);
    doc["pr_id"] = p.pr.id;
    if (pc.fully_covered()) {
        spdlog::info("PR {} is fully covered ({} of {} changed executable lines); nothing to do", p.pr.id,
                     pc.covered_count(), pc.executable_count());
        doc["status"] = "fully_covered";
        write_json(p.dir / "patch_coverage.json", doc);
        return StageStatus::FullyCovered;
    }
    doc["status"] = "partial";

    StructureIndex structure = structure_from_json(read_json(in.structure, "structure index (--structure)"));
    std::map<std::string, std::string> sources;
    LinesByFile branches;
    for (const auto& [path, _] : group_by_file(pc.uncovered)) {
        sources[path] = read_ws(s, path);
        if (const FileCoverage* fc = cov.find(path))
            branches[path] = fc->missed_branch_lines;
    }
    std::vector<FocalFunction> focals = segment_focal_functions(pc, structure, sources, branches);
    json fj = json::array();
    for (const auto& f : focals)
        fj.push_back(to_json(f));
    write_json(p.dir / "patch_coverage.json", doc);
    write_json(p.dir / "focals.json", {{"schema_version", 1}, {"focals", fj}});
    spdlog::info("PR {}: patch coverage {}/{}; {} focal function(s)", p.pr.id, pc.covered_count(),
                 pc.executable_count(), focals.size());
    return StageStatus::Done;
}

StageStatus run_context_stage(const PipelineInputs& in, Services& s)
{
    PrInputs p = load_pr(in, s);
    if (!proceed(p, "context"))
        return StageStatus::Skipped;
    const Config& cfg = s.config;
    ProvenanceLog log = open_log(p, s);
    Gateway gw(*s.provider, log, gateway_options(cfg));

    std::vector<FocalFunction> focals = load_focals(p);
    std::string page = in.page.empty() ? render_pr_page(p.pr) : read_file(in.page);
    PrContextSummary pr_ctx = enrich_context(
        p.pr, page, s.fetcher, gw,
        {static_cast<std::size_t>(cfg.max_links), static_cast<std::size_t>(cfg.max_page_chars)});
    write_json(p.dir / "pr_context.json", to_json(pr_ctx));

    TestSuiteIndex tests = in.test_index.empty() ? build_test_suite_index(workspace(s).root())
                                                 : test_index_from_json(read_json(in.test_index, "test suite index"));
    TraceProvider profile = [&](const std::vector<std::string>& files) -> CallTrace {
        if (!in.trace.empty())
            return trace_from_json(read_json(in.trace, "call trace"));
        ExecutionResult r = s.backend().run_suite(workspace(s), {files}, {.coverage = false, .trace = true});
        if (!r.trace)
            throw BackendError("profiler run produced no call trace");
        return *r.trace;
    };
    std::unique_ptr<ContextCache> cache;
    if (!cfg.cache.empty())
        cache = std::make_unique<ContextCache>(cfg.cache);
    ContextStats stats;
    TestContextMap ctx = build_test_context_map(
        p.pr.diff, p.diff_text, tests, focals, profile, gw, cache.get(),
        [&](const std::string& path) { return read_ws(s, path); },
        {static_cast<std::size_t>(cfg.jaccard_top_k)}, &stats);
    write_json(p.dir / "test_context.json", to_json(ctx));
    spdlog::info("PR {}: context from {} link(s), {} profiler run(s), {} cache hit(s)", p.pr.id,
                 pr_ctx.visited_urls.size(), stats.profiler_runs, stats.cache_hits);
    return StageStatus::Done;
}

StageStatus run_generate_stage(const PipelineInputs& in, Services& s)
{
    PrInputs p = load_pr(in, s);
    if (!proceed(p, "generate"))
        return StageStatus::Skipped;
    const Config& cfg = s.config;
    ProvenanceLog log = open_log(p, s);
    Gateway gw(*s.provider, log, gateway_options(cfg));

    GenerationInputs gi;
    gi.diff_text = p.diff_text;
    gi.pr_context = pr_context_from_json(read_json((p.dir / "pr_context.json").string(), "PR context artifact"));
    gi.patch_coverage = patch_coverage_from_json(read_json((p.dir / "patch_coverage.json").string(), "patch coverage artifact"));
    gi.focals = load_focals(p);
    gi.contexts = test_context_map_from_json(read_json((p.dir / "test_context.json").string(), "test context artifact"));

    GenerationRun run = run_generation(gw, s.backend(), workspace(s), gi, {cfg.tests_per_pr, cfg.max_feedback_rounds});
    write_json(p.dir / "candidates.json", to_json(run));
    std::size_t accepted = std::count_if(run.candidates.begin(), run.candidates.end(),
                                         [](const CandidateTest& c) { return c.accepted(); });
    spdlog::info("PR {}: {} candidate(s), {} accepted", p.pr.id, run.candidates.size(), accepted);
    return StageStatus::Done;
}

StageStatus run_report_stage(const PipelineInputs& in, Services& s)
{
    PrInputs p = load_pr(in, s);
    if (!proceed(p, "report"))
        return StageStatus::Skipped;
    const Config& cfg = s.config;
    ProvenanceLog log = open_log(p, s);
    Gateway gw(*s.provider, log, gateway_options(cfg));

    PatchCoverage pc = patch_coverage_from_json(read_json((p.dir / "patch_coverage.json").string(), "patch coverage artifact"));
    PrContextSummary pr_ctx = pr_context_from_json(read_json((p.dir / "pr_context.json").string(), "PR context artifact"));
    GenerationRun run = generation_run_from_json(read_json((p.dir / "candidates.json").string(), "candidates artifact"));

    std::vector<CandidateTest> accepted;
    for (const auto& c : run.candidates)
        if (c.accepted() && c.outcome && !c.outcome->added_lines.empty())
            accepted.push_back(c);

    ReportData data;
    data.pr_id = p.pr.id;
    data.pr_title = p.pr.title;
    data.patch_coverage = pc;
    data.candidates_generated = run.candidates.size();
    data.candidates_accepted = accepted.size();
    for (const auto& [path, _] : group_by_file(pc.executable))
        data.sources[path] = read_ws(s, path);

    std::map<std::string, std::string> files;
    auto file_text = [&](const std::string& path) -> std::string& {
        auto it = files.find(path);
        if (it == files.end())
            it = files.emplace(path, read_ws(s, path)).first;
        return it->second;
    };

    for (const auto& cluster : cluster_by_coverage(accepted)) {
        CandidateTest best = select_best(gw, cluster, pr_ctx, p.diff_text, pc);
        std::vector<const CandidateTest*> order = {&best};
        for (const auto& m : cluster.members)
            if (m.id != best.id)
                order.push_back(&m);
        bool merged = false;
        for (const CandidateTest* c : order) {
            std::string& current = file_text(c->context_used.file);
            try {
                IntegrationPlan plan = decide_integration_mode(gw, *c, c->context_used, current);
                MergeResult m = merge_test(plan, c->source, current);
                std::string patch = unified_diff(current, m.merged_file, plan.file);
                current = m.merged_file;
                data.entries.push_back({*c, plan, m, patch});
                merged = true;
                break;
            } catch (const ParseFailure& e) {
                data.notes.push_back(c->id + " could not be merged: " + e.what());
            } catch (const NameCollision& e) {
                data.notes.push_back(c->id + " could not be merged: " + e.what());
            }
        }
        if (!merged)
            spdlog::warn("PR {}: no member of a coverage cluster could be merged", p.pr.id);
    }

    json entries = json::array();
    std::vector<CandidateTest> selected;
    for (const auto& e : data.entries) {
        entries.push_back(to_json(e));
        selected.push_back(e.test);
    }
    write_json(p.dir / "report_entries.json", {{"schema_version", 1},
                                               {"pc_before", pc.ratio()},
                                               {"pc_after", pc_after(pc, selected)},
                                               {"entries", entries}});
    for (const auto& [path, text] : files)
        write_file_atomic((p.dir / "merged" / path).string(), text);

    data.cost = ledger_from_log(log.records(), gateway_options(cfg).pricing);
    fs::path report = emit_report(data, cfg.out_dir);
    spdlog::info("PR {}: report written to {} ({} test(s))", p.pr.id, report.string(), data.entries.size());
    return StageStatus::Done;
}

StageStatus run_augment(const PipelineInputs& in, Services& s)
{
    StageStatus st = run_coverage_stage(in, s);
    if (st != StageStatus::Done)
        return st;
    run_context_stage(in, s);
    run_generate_stage(in, s);
    return run_report_stage(in, s);
}

} // namespace covaug
