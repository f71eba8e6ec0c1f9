/* tslint:disable */
/* eslint-disable */

/**
 * Optimal discriminator for unit Gaussians at 0 (data) and `shift` (generator).
 */
export function discriminator_curve(kappa: number, shift: number, points: number): string;

/**
 * Discriminator and generator losses for comma-separated probabilities.
 */
export function losses(kappa: number, d_real: string, d_fake: string): string;

/**
 * Build a synthetic one-period population from a `SyntheticSpec` JSON object
 * (missing fields take defaults) and run the consistency detector on it.
 */
export function mcd_demo(spec_json: string, seed: bigint, delta: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly discriminator_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly losses: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly mcd_demo: (a: number, b: number, c: bigint, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
