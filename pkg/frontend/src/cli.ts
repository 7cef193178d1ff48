/** Minimal shared argument parsing for the figure scripts: repeated
 * `--csv PATH` plus `--out PATH` and script-specific options. */

export interface ParsedArgs {
  csvs: string[];
  out?: string;
  options: Map<string, string[]>;
}

export function parseArgs(argv: string[], allowed: string[]): ParsedArgs {
  const csvs: string[] = [];
  let out: string | undefined;
  const options = new Map<string, string[]>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) {
      throw new Error(`unexpected positional argument '${arg}'`);
    }
    const key = arg.slice(2);
    const value = argv[++i];
    if (value === undefined) {
      throw new Error(`missing value for --${key}`);
    }
    if (key === "csv") {
      csvs.push(value);
    } else if (key === "out") {
      out = value;
    } else if (allowed.includes(key)) {
      const list = options.get(key) ?? [];
      list.push(value);
      options.set(key, list);
    } else {
      throw new Error(`unknown option --${key}`);
    }
  }
  return { csvs, out, options };
}

export function fail(message: string): never {
  console.error(`error: ${message}`);
  process.exit(1);
}
