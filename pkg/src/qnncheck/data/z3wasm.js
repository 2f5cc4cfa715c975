#!/usr/bin/env node
// Minimal SMT-LIB front-end for the z3 WebAssembly build.
//
// Usage: node z3wasm.js <script.smt2>
// Prints the solver's answer (sat/unsat/unknown plus model) on stdout,
// matching what a native `z3 script.smt2` invocation would print.
//
// The z3-solver npm package may be installed locally or globally; the
// global node_modules roots are added to the resolution path explicitly
// because `node script.js` does not search them by default.

"use strict";

const fs = require("fs");
const path = require("path");
const Module = require("module");

for (const root of [
  "/usr/lib/node_modules",
  "/usr/local/lib/node_modules",
  path.join(process.env.HOME || "", ".node_modules"),
]) {
  if (fs.existsSync(root) && !module.paths.includes(root)) {
    module.paths.push(root);
  }
}
Module._initPaths();

async function main() {
  const file = process.argv[2];
  if (!file) {
    process.stderr.write("usage: z3wasm.js <script.smt2>\n");
    process.exit(64);
  }
  const script = fs.readFileSync(file, "utf8");
  const { init } = require("z3-solver");
  const { Z3 } = await init();
  const cfg = Z3.mk_config();
  const ctx = Z3.mk_context(cfg);
  try {
    const out = await Z3.eval_smtlib2_string(ctx, script);
    process.stdout.write(out.endsWith("\n") ? out : out + "\n");
  } finally {
    // the wasm worker pool keeps the event loop alive; exit explicitly
    process.exit(0);
  }
}

main().catch((err) => {
  process.stderr.write(String(err && err.stack ? err.stack : err) + "\n");
  process.exit(1);
});
