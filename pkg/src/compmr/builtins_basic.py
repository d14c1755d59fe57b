"""Generic built-in components and verdicts usable from any pipeline spec."""

import shutil

from .executors import register


@register("executor", "identity")
def identity(inputs, outputs, params, ctx):
    """Copy input ports to output ports of the same name (or positionally)."""
    ins = list(inputs.items())
    for i, (port, dest) in enumerate(outputs.items()):
        src = inputs.get(port) or ins[min(i, len(ins) - 1)][1]
        shutil.copyfile(src, dest)


@register("executor", "fail")
def fail(inputs, outputs, params, ctx):
    raise RuntimeError(params.get("message", "deliberate failure"))


@register("verdict", "outputs_nonempty")
def outputs_nonempty(ctx, vertex, params):
    """Every output file of ``vertex`` is non-empty on every test."""
    ports = params.get("ports") or ctx.trace.output_ports(vertex)
    return all(ctx.output(vertex, port, k).stat().st_size > 0 for port in ports for k in range(ctx.n))


@register("verdict", "outputs_equal")
def outputs_equal(ctx, vertex, params):
    ports = params.get("ports") or ctx.trace.output_ports(vertex)
    for port in ports:
        blobs = [ctx.output(vertex, port, k).read_bytes() for k in range(ctx.n)]
        if any(b != blobs[0] for b in blobs):
            return False
    return True


@register("verdict", "lines_subset_chain")
def lines_subset_chain(ctx, vertex, params):
    """Line sets of a port grow monotonically along the series."""
    port = params["port"]
    sets = [set(ctx.output(vertex, port, k).read_text().splitlines()) for k in range(ctx.n)]
    return all(a <= b for a, b in zip(sets, sets[1:]))
