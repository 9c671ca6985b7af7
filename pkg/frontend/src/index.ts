/**
 * Node bindings for the `dmc` command line.
 *
 * Every call shells out to the CLI and speaks its file formats, so results
 * are exactly what the tool itself would produce (the JSON report bytes are
 * identical). Sync variants block the calling thread; the *Async variants
 * run the external process off the event loop, so other JS keeps executing
 * while the native side computes. All functions are reentrant.
 *
 * The binary is resolved from DMC_BIN, falling back to `dmc` on PATH.
 */

import { spawn, spawnSync } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

export class DmcError extends Error {
    /** CLI exit code: 2 invalid input or I/O, 3 internal. */
    readonly code: number;
    /** Error class name reported by the CLI, or a local category. */
    readonly kind: string;

    constructor(code: number, message: string, kind: string) {
        super(message);
        this.name = 'DmcError';
        this.code = code;
        this.kind = kind;
    }
}

export type SegmentRecord = {
    start_cs: number;
    end_cs: number;
    caption: string;
};

export type AnnotationRecord = {
    id: string;
    duration_cs: number;
    segments: SegmentRecord[];
};

export type MetricReport = {
    schema_version: number;
    config: Record<string, unknown>;
    corpus: Record<string, number>;
    counts: Record<string, number>;
    per_sequence: Record<string, Record<string, number>>;
    warnings: string[];
};

export type EvalOptions = {
    iouThresholds?: number[];
    scorers?: string[];
    sodaIouWeighted?: boolean;
    threads?: number;
    /** Path to an external caption-score matrix file. */
    scoresMatrixPath?: string;
};

export type ParseOutcome = {
    annotation: AnnotationRecord;
    dropped_lines: number;
    warnings: { line: number; message: string }[];
};

export type ParseOptions = {
    mode?: 'strict' | 'lenient';
    id?: string;
};

export type ComposeOptions = {
    seed?: number;
    mode?: 'hard' | 'blend';
    minAlignment?: number;
    /** Directory with atomic motion binaries; enables motion output. */
    motionsDir?: string;
};

export type ComposeResult = {
    manifest: Record<string, unknown>;
    manifestPath: string;
    annotationsPath: string;
};

export type SodaScore = { precision: number; recall: number; f: number };

export type SodaReport = {
    corpus: SodaScore;
    perSequence: Record<string, SodaScore>;
};

function cliPath(): string {
    return process.env.DMC_BIN ?? 'dmc';
}

function errorFromExit(status: number, stderr: string): DmcError {
    const line = stderr.trim().split('\n').pop() ?? '';
    try {
        const parsed = JSON.parse(line) as { code: number; error: string; type: string };
        return new DmcError(parsed.code, parsed.error, parsed.type);
    } catch {
        return new DmcError(status, stderr.trim() || `dmc exited with status ${status}`, 'CliError');
    }
}

function runSync(args: string[], input?: string): string {
    const result = spawnSync(cliPath(), ['--json-errors', ...args], {
        encoding: 'utf8',
        input,
        maxBuffer: 256 * 1024 * 1024,
    });
    if (result.error) {
        throw new DmcError(3, result.error.message, 'SpawnError');
    }
    if (result.status !== 0) {
        throw errorFromExit(result.status ?? 3, result.stderr);
    }
    return result.stdout;
}

function runAsync(args: string[], input?: string): Promise<string> {
    return new Promise((resolve, reject) => {
        const child = spawn(cliPath(), ['--json-errors', ...args]);
        let stdout = '';
        let stderr = '';
        child.stdout.setEncoding('utf8');
        child.stderr.setEncoding('utf8');
        child.stdout.on('data', (chunk: string) => (stdout += chunk));
        child.stderr.on('data', (chunk: string) => (stderr += chunk));
        child.on('error', (err) => reject(new DmcError(3, err.message, 'SpawnError')));
        child.on('close', (status) => {
            if (status === 0) {
                resolve(stdout);
            } else {
                reject(errorFromExit(status ?? 3, stderr));
            }
        });
        if (input !== undefined) {
            child.stdin.write(input);
        }
        child.stdin.end();
    });
}

function inTempDir<T>(fn: (dir: string) => T): T {
    const dir = mkdtempSync(join(tmpdir(), 'dmc-'));
    try {
        return fn(dir);
    } finally {
        rmSync(dir, { recursive: true, force: true });
    }
}

function evalArgs(predsPath: string, refsPath: string, outPath: string, dir: string, options: EvalOptions): string[] {
    const args = ['eval', '--preds', predsPath, '--refs', refsPath, '--out', outPath];
    const config: Record<string, unknown> = {};
    if (options.iouThresholds) config.iou_thresholds = options.iouThresholds;
    if (options.scorers) config.scorers = options.scorers;
    if (options.sodaIouWeighted !== undefined) config.soda_iou_weighted = options.sodaIouWeighted;
    if (Object.keys(config).length > 0) {
        const configPath = join(dir, 'config.json');
        writeFileSync(configPath, JSON.stringify(config));
        args.push('--config', configPath);
    }
    if (options.threads !== undefined) args.push('--threads', String(options.threads));
    if (options.scoresMatrixPath) args.push('--scores-matrix', options.scoresMatrixPath);
    return args;
}

/** Score predictions against references, returning the raw report JSON text. */
export function evaluateJson(predsPath: string, refsPath: string, options: EvalOptions = {}): string {
    return inTempDir((dir) => {
        const outPath = join(dir, 'report.json');
        runSync(evalArgs(predsPath, refsPath, outPath, dir, options));
        return readFileSync(outPath, 'utf8');
    });
}

export function evaluate(predsPath: string, refsPath: string, options: EvalOptions = {}): MetricReport {
    return JSON.parse(evaluateJson(predsPath, refsPath, options)) as MetricReport;
}

export async function evaluateAsync(
    predsPath: string,
    refsPath: string,
    options: EvalOptions = {},
): Promise<MetricReport> {
    const dir = mkdtempSync(join(tmpdir(), 'dmc-'));
    try {
        const outPath = join(dir, 'report.json');
        await runAsync(evalArgs(predsPath, refsPath, outPath, dir, options));
        return JSON.parse(readFileSync(outPath, 'utf8')) as MetricReport;
    } finally {
        rmSync(dir, { recursive: true, force: true });
    }
}

function sodaFromReport(report: MetricReport): SodaReport {
    const pick = (row: Record<string, number>): SodaScore => ({
        precision: row.soda_precision,
        recall: row.soda_recall,
        f: row.soda_f,
    });
    const perSequence: Record<string, SodaScore> = {};
    for (const [id, row] of Object.entries(report.per_sequence)) {
        perSequence[id] = pick(row);
    }
    return { corpus: pick(report.corpus), perSequence };
}

/** Alignment-based caption scores (0..100 scale), extracted from a full run. */
export function sodaScore(predsPath: string, refsPath: string, options: EvalOptions = {}): SodaReport {
    return sodaFromReport(evaluate(predsPath, refsPath, options));
}

export async function sodaScoreAsync(
    predsPath: string,
    refsPath: string,
    options: EvalOptions = {},
): Promise<SodaReport> {
    return sodaFromReport(await evaluateAsync(predsPath, refsPath, options));
}

function composeArgs(poolPath: string, count: number, outDir: string, options: ComposeOptions): string[] {
    const args = ['compose', '--pool', poolPath, '--count', String(count), '--out', outDir];
    if (options.seed !== undefined) args.push('--seed', String(options.seed));
    if (options.mode) args.push('--mode', options.mode);
    if (options.minAlignment !== undefined) args.push('--min-alignment', String(options.minAlignment));
    if (options.motionsDir) args.push('--motions', options.motionsDir);
    return args;
}

function composeResult(outDir: string): ComposeResult {
    const manifestPath = join(outDir, 'manifest.json');
    return {
        manifest: JSON.parse(readFileSync(manifestPath, 'utf8')) as Record<string, unknown>,
        manifestPath,
        annotationsPath: join(outDir, 'annotations.jsonl'),
    };
}

/** Compose a seeded synthetic dataset into outDir and return its manifest. */
export function compose(poolPath: string, count: number, outDir: string, options: ComposeOptions = {}): ComposeResult {
    runSync(composeArgs(poolPath, count, outDir, options));
    return composeResult(outDir);
}

export async function composeAsync(
    poolPath: string,
    count: number,
    outDir: string,
    options: ComposeOptions = {},
): Promise<ComposeResult> {
    await runAsync(composeArgs(poolPath, count, outDir, options));
    return composeResult(outDir);
}

function parseArgs(durationCs: number, options: ParseOptions): string[] {
    const args = ['parse', '--duration-cs', String(durationCs)];
    if (options.mode) args.push('--mode', options.mode);
    if (options.id) args.push('--id', options.id);
    return args;
}

/** Parse timestamped caption text into an annotation (duration in centiseconds). */
export function parseDenseText(text: string, durationCs: number, options: ParseOptions = {}): ParseOutcome {
    return JSON.parse(runSync(parseArgs(durationCs, options), text)) as ParseOutcome;
}

export async function parseDenseTextAsync(
    text: string,
    durationCs: number,
    options: ParseOptions = {},
): Promise<ParseOutcome> {
    return JSON.parse(await runAsync(parseArgs(durationCs, options), text)) as ParseOutcome;
}

/** Version of the underlying tool, e.g. "0.1.0". Mirrors this package's version. */
export function version(): string {
    const out = runSync(['--version']).trim();
    return out.split(/\s+/).pop() ?? out;
}
