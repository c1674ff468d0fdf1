/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Executes `forward`, `left` or `right` without noise. Returns true on
     * collision.
     */
    act(action: string): boolean;
    /**
     * Runs one episode steered by dead reckoning on nominal motions while
     * actuation noise is scaled by `noise`. Returns a one-line summary; the
     * trajectory image is available from `drift_rgba`.
     */
    drift(episode: number, noise: number): string;
    drift_rgba(): Uint8Array;
    /**
     * Top-down map with the agent and a short heading tick.
     */
    map_rgba(): Uint8Array;
    map_size(): number;
    /**
     * Generates the scene for `seed` and places the agent at a free cell.
     */
    constructor(seed: number);
    /**
     * Moves the agent to a clicked map pixel. Returns false on walls.
     */
    place(px: number, py: number): boolean;
    view_height(): number;
    /**
     * First-person `rgb` or `depth` image; depth is shown near-bright.
     */
    view_rgba(modality: string): Uint8Array;
    view_width(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_act: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_drift: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_drift_rgba: (a: number) => [number, number];
    readonly demo_map_rgba: (a: number) => [number, number];
    readonly demo_map_size: (a: number) => number;
    readonly demo_new: (a: number) => [number, number, number];
    readonly demo_place: (a: number, b: number, c: number) => number;
    readonly demo_view_height: (a: number) => number;
    readonly demo_view_rgba: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_view_width: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
