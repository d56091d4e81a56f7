/**
 * Sentence encoders. Two implementations:
 *
 *  - HashEncoder: a deterministic feature-hashing encoder (word unigrams,
 *    bigrams, character trigrams hashed into a fixed-width signed bag).
 *    No model download, byte-stable across platforms; used for fixtures
 *    and offline testing. Not semantically meaningful beyond surface overlap.
 *  - loadPretrainedEncoder: the real pretrained sentence encoder, loaded
 *    on demand; requires the model files to be downloadable or cached.
 */

export interface SentenceEncoder {
    readonly modelVersion: string
    readonly dim: number
    encode(texts: string[]): Promise<Float32Array[]>
}

/** FNV-1a 32-bit hash; plain integer ops so every runtime agrees. */
function fnv1a(s: string, seed: number): number {
    let h = (0x811c9dc5 ^ seed) >>> 0
    for (let i = 0; i < s.length; i++) {
        h ^= s.charCodeAt(i)
        h = Math.imul(h, 0x01000193) >>> 0
    }
    return h
}

function tokenize(text: string): string[] {
    return text.toLowerCase().match(/\w+/g) ?? []
}

function* features(text: string): Generator<string> {
    const words = tokenize(text)
    for (const w of words) yield 'u:' + w
    for (let i = 0; i + 1 < words.length; i++) yield 'b:' + words[i] + ' ' + words[i + 1]
    const flat = words.join(' ')
    for (let i = 0; i + 2 < flat.length; i++) yield 'c:' + flat.slice(i, i + 3)
}

export class HashEncoder implements SentenceEncoder {
    readonly modelVersion: string
    readonly dim: number

    constructor(dim = 512) {
        if (dim < 2) throw new Error('dim must be >= 2')
        this.dim = dim
        this.modelVersion = `hash-ngram-v1-d${dim}`
    }

    private encodeOne(text: string): Float32Array {
        const acc = new Float64Array(this.dim)
        let any = false
        for (const f of features(text)) {
            const h = fnv1a(f, 0)
            const sign = (h & 1) === 0 ? 1 : -1
            acc[(h >>> 1) % this.dim] += sign
            any = true
        }
        if (!any) {
            // blank / non-word text still needs a well-defined unit vector
            acc[fnv1a('<empty>', 0) % this.dim] = 1
        }
        let sq = 0
        for (let k = 0; k < this.dim; k++) sq += acc[k] * acc[k]
        const inv = 1 / Math.sqrt(sq)
        const out = new Float32Array(this.dim)
        for (let k = 0; k < this.dim; k++) out[k] = acc[k] * inv
        return out
    }

    async encode(texts: string[]): Promise<Float32Array[]> {
        return texts.map((t) => this.encodeOne(t))
    }
}

/**
 * Load the pretrained general-purpose sentence encoder (512-d). The package
 * and its weights are optional; a clear "model unavailable" error is raised
 * when they cannot be loaded (e.g. offline).
 */
export async function loadPretrainedEncoder(): Promise<SentenceEncoder> {
    let use: any
    try {
        use = await import('@tensorflow-models/universal-sentence-encoder' as string)
        await import('@tensorflow/tfjs' as string)
    } catch (err) {
        throw new Error(`model unavailable: pretrained encoder packages not installed (${err})`)
    }
    let model: any
    try {
        model = await use.load()
    } catch (err) {
        throw new Error(`model unavailable: could not load pretrained weights (${err})`)
    }
    return {
        modelVersion: 'universal-sentence-encoder-tfjs',
        dim: 512,
        async encode(texts: string[]): Promise<Float32Array[]> {
            const tensor = await model.embed(texts)
            const rows: number[][] = await tensor.array()
            tensor.dispose()
            return rows.map((r) => Float32Array.from(r))
        },
    }
}

export async function makeEncoder(name: string, dim: number): Promise<SentenceEncoder> {
    switch (name) {
        case 'hash':
            return new HashEncoder(dim)
        case 'use':
            return loadPretrainedEncoder()
        default:
            throw new Error(`unknown encoder ${JSON.stringify(name)} (expected hash or use)`)
    }
}
