/* tslint:disable */
/* eslint-disable */

/**
 * Runs a seeded station on `config` for `ticks` steps and returns the KPI
 * samples, with optional fault injections and a restart along the way.
 *
 * Request: `{seed, config, ticks, dt_s?, faults?: [{tick, kind}], restart_at?}`.
 */
export function kpi_curves(request: string): string;

/**
 * BM25 search over the shipped manual or caller-supplied documents.
 *
 * Request: `{query, k?, documents?: [{doc_id, text}]}`.
 */
export function search(request: string): string;

/**
 * Validation report for a cell config, plus the downlink frequency, PRB
 * count and PCI split wherever those are computable.
 */
export function validate(config: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly kpi_curves: (a: number, b: number) => [number, number];
    readonly search: (a: number, b: number) => [number, number];
    readonly validate: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
