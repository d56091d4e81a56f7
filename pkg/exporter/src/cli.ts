#!/usr/bin/env node
/**
 * CLI: `useg-export export` embeds a raw review JSONL into the engine's
 * corpus files; `useg-export validate` re-checks an exported corpus and
 * prints dimension, counts, and norm statistics.
 */

import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { makeEncoder } from './encoders.js'
import { runExport } from './export.js'
import { validateCorpus } from './format.js'

async function main(): Promise<number> {
    try {
        await yargs(hideBin(process.argv))
            .command(
                'export',
                'embed a documents JSONL into corpus files',
                (y) =>
                    y
                        .option('input', { type: 'string', demandOption: true })
                        .option('out', {
                            type: 'string',
                            demandOption: true,
                            describe: 'base path; writes .jsonl/.vec/.index.json',
                        })
                        .option('encoder', {
                            type: 'string',
                            default: 'hash',
                            choices: ['hash', 'use'],
                        })
                        .option('dim', { type: 'number', default: 512 })
                        .option('batch-size', { type: 'number', default: 32 })
                        .option('no-normalize', { type: 'boolean', default: false }),
                async (args) => {
                    const encoder = await makeEncoder(args.encoder, args.dim)
                    const paths = await runExport(
                        {
                            input: args.input,
                            outBase: args.out,
                            batchSize: args.batchSize,
                            normalize: !args.noNormalize,
                        },
                        encoder
                    )
                    console.log(
                        `wrote ${paths.docs} + sidecar + index ` +
                            `(model ${encoder.modelVersion}, d=${encoder.dim})`
                    )
                }
            )
            .command(
                'validate',
                'validate an exported corpus and print statistics',
                (y) => y.option('corpus', { type: 'string', demandOption: true }),
                async (args) => {
                    const report = validateCorpus(args.corpus)
                    console.log(
                        `OK d=${report.dim} docs=${report.nDocs} ` +
                            `vectors=${report.nVectors} model=${report.modelVersion} ` +
                            `norms [${report.normMin.toFixed(6)}, ` +
                            `${report.normMax.toFixed(6)}] mean ${report.normMean.toFixed(6)}`
                    )
                }
            )
            .demandCommand(1)
            .strict()
            .fail((msg, err) => {
                throw err ?? new Error(msg)
            })
            .parseAsync()
        return 0
    } catch (err) {
        console.error(`error: ${err instanceof Error ? err.message : err}`)
        return 1
    }
}

main().then((code) => {
    process.exitCode = code
})
