from PvitForge import LOGGER, app
from PvitForge.pipeline.bench import validate_bench
from PvitForge.pipeline.synthesis import instance_violations
from PvitForge.utils.exceptions import MissingStageInput
from PvitForge.utils.manifest import INSTANCE_SCHEMA, PBENCH, PVIT, read_jsonl, write_json


@app.command("validate")
async def cmd_validate(ctx) -> dict:
    """Check every instance and benchmark item; violations give exit code 2."""
    result = {}
    if ctx.path(PVIT).exists():
        records = read_jsonl(ctx.path(PVIT), INSTANCE_SCHEMA, key="instance_id")
        violations = [
            {"instance_id": r["instance_id"], "rule": rule} for r in records for rule in instance_violations(r)
        ]
        result["pvit"] = {"items": len(records), "violations": violations, "ok": not violations}
    if ctx.path(PBENCH).exists():
        result["pbench"] = validate_bench(ctx.path(PBENCH))
    if not result:
        raise MissingStageInput(f"neither {PVIT} nor {PBENCH} exists in {ctx.cfg.output_dir}")
    write_json(ctx.path("validation.json"), result)
    total = sum(len(part["violations"]) for part in result.values())
    for name, part in result.items():
        LOGGER(__name__).info(f"{name}: {part['items']} checked, {len(part['violations'])} violation(s)")
    return {"violations": total}
