/**
 * Entry point: parse --protocol and --data, then serve the request loop.
 * The harness launches one process per trial; shutdown answers ok and exits 0.
 */

import { TrainerSession } from "./trainer";
import { PROTOCOL_VERSION, readLines, writeLine } from "./protocol";

function parseArgs(argv: string[]): { protocol: string; data: string } {
  const out: Record<string, string> = {};
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--protocol") {
      out.protocol = argv[++i];
    } else if (argv[i] === "--data") {
      out.data = argv[++i];
    }
  }
  if (!out.protocol || !out.data) {
    process.stderr.write("usage: main.js --protocol 1 --data <trainer_data.json>\n");
    process.exit(2);
  }
  return out as { protocol: string; data: string };
}

export async function serve(argv: string[]): Promise<number> {
  const args = parseArgs(argv);
  if (args.protocol !== String(PROTOCOL_VERSION)) {
    writeLine({ ok: false, error: "bad_request" });
    return 1;
  }
  const session = new TrainerSession(args.data);
  for await (const line of readLines(process.stdin)) {
    let msg: unknown;
    try {
      msg = JSON.parse(line);
    } catch {
      writeLine({ ok: false, error: "bad_request" });
      continue;
    }
    if (typeof msg === "object" && msg !== null && (msg as { cmd?: string }).cmd === "shutdown") {
      writeLine({ ok: true });
      return 0;
    }
    writeLine(session.handle(msg));
  }
  return 0;
}

if (require.main === module) {
  serve(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      process.stderr.write(`fatal: ${err}\n`);
      process.exit(1);
    },
  );
}
