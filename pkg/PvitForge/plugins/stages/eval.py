from PvitForge import app
from PvitForge.pipeline.bench import load_bench, validate_bench
from PvitForge.pipeline.evaluation import run_eval, score
from PvitForge.pipeline.report import render_report
from PvitForge.utils.exceptions import PreconditionError
from PvitForge.utils.manifest import PBENCH, RESPONSES, write_json


@app.command("eval", stage="eval")
async def cmd_eval(ctx) -> dict:
    """Ask the model under test every benchmark item and score the answers."""
    items = load_bench(ctx.path(PBENCH)).items
    checked = validate_bench(items)
    if not checked["ok"]:
        raise PreconditionError(f"{PBENCH} has {len(checked['violations'])} violation(s), run validate")
    if ctx.cfg.limit:
        items = items[: ctx.cfg.limit]
    responses = await run_eval(ctx.backends, ctx.prompts, items, ctx.cfg.eval, ctx.path(RESPONSES))
    report = score(items, responses)
    text, record = render_report(report, ctx.cfg.backends.capability("model_under_test").model or "model")
    ctx.path("report.txt").write_text(text, encoding="utf-8")
    write_json(ctx.path("report.json"), record)
    print(text)
    return {"items": len(items), "no_response": report.no_response}
