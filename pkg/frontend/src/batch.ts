/** Validating readers for batch.json / result.json (docs/formats.md). */

export interface ArmReport {
  name: string;
  nRuns: number;
  cep: number;
  successRate: number;
  misses: number[];
  outcomes: string[];
  missVectors: [number, number, number][];
}

export interface Batch {
  preset: string | null;
  arms: Map<string, ArmReport>;
}

function fail(where: string, what: string): never {
  throw new Error(`batch.json ${where}: ${what}`);
}

export function parseBatch(text: string): Batch {
  let doc: any;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new Error(`batch.json is not valid JSON: ${(e as Error).message}`);
  }
  if (doc.schema !== 1) fail("schema", `expected 1, got ${doc.schema}`);
  if (typeof doc.arms !== "object" || doc.arms === null) fail("arms", "missing arms object");
  const arms = new Map<string, ArmReport>();
  for (const [name, raw] of Object.entries<any>(doc.arms)) {
    if (!Array.isArray(raw.misses)) fail(`arms.${name}.misses`, "missing array");
    if (!Array.isArray(raw.miss_vectors)) fail(`arms.${name}.miss_vectors`, "missing array");
    if (typeof raw.cep !== "number") fail(`arms.${name}.cep`, "missing number");
    const vectors = raw.miss_vectors.map((v: any, i: number) => {
      if (!Array.isArray(v) || v.length !== 3) {
        fail(`arms.${name}.miss_vectors[${i}]`, "expected a 3-vector");
      }
      return [Number(v[0]), Number(v[1]), Number(v[2])] as [number, number, number];
    });
    arms.set(name, {
      name,
      nRuns: Number(raw.n_runs ?? raw.misses.length),
      cep: raw.cep,
      successRate: Number(raw.success_rate ?? NaN),
      misses: raw.misses.map(Number),
      outcomes: Array.isArray(raw.outcomes) ? raw.outcomes.map(String) : [],
      missVectors: vectors,
    });
  }
  if (arms.size === 0) fail("arms", "no arms present");
  return { preset: doc.preset ?? null, arms };
}
