/**
 * make-figure CLI: renders one SVG from a simulator log.
 *
 *   node dist/cli.js make-figure --kind trajectory3d --in out/trajectory.csv --out fig.svg
 *
 * Kinds: trajectory3d | image_coords | attitude (trajectory.csv input)
 *        boxplot | cep_scatter (batch.json input)
 */

import { readFileSync, writeFileSync } from "fs";
import { FIGURE_KINDS, FigureKind, makeFigure } from "./figures";

function usage(message?: string): never {
  if (message) console.error(`error: ${message}`);
  console.error("usage: make-figure --kind <kind> --in <path> --out <path>");
  console.error(`kinds: ${FIGURE_KINDS.join(", ")}`);
  process.exit(message ? 1 : 0);
}

export function main(argv: string[]): number {
  if (argv[0] !== "make-figure") {
    usage(`unknown command: ${argv[0] ?? "(none)"}`);
  }
  let kind: string | undefined;
  let input: string | undefined;
  let output: string | undefined;
  for (let i = 1; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) usage(`missing value for ${flag}`);
    if (flag === "--kind") kind = value;
    else if (flag === "--in") input = value;
    else if (flag === "--out") output = value;
    else usage(`unknown flag: ${flag}`);
  }
  if (!kind || !input || !output) usage("--kind, --in and --out are all required");
  if (!(FIGURE_KINDS as readonly string[]).includes(kind)) usage(`unknown figure kind: ${kind}`);

  let text: string;
  try {
    text = readFileSync(input, "utf8");
  } catch (e) {
    console.error(`error: cannot read ${input}: ${(e as Error).message}`);
    return 1;
  }
  let svg: string;
  try {
    svg = makeFigure(kind as FigureKind, text);
  } catch (e) {
    console.error(`error: ${(e as Error).message}`);
    return 1;
  }
  writeFileSync(output, svg);
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
